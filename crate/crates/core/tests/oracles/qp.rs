//! Epsilon-SVR dual solved by accelerated projected gradient (FISTA with
//! adaptive restart) in the doubled variable space.
//!
//! min ½ αᵀQα + pᵀα  over  0 ≤ α ≤ C,  sᵀα = 0.

pub struct QpSolution {
    pub beta: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

pub fn kernel_matrix(x: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    x.iter().map(|a| x.iter().map(|b| rbf(a, b, gamma)).collect()).collect()
}

/// Dual objective in β form, `−½βᵀKβ − εΣ|β| + yᵀβ`.
pub fn dual_objective(k: &[Vec<f64>], y: &[f64], beta: &[f64], eps: f64) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * beta[j] * k[i][j];
        }
    }
    let lin: f64 = (0..n).map(|i| y[i] * beta[i] - eps * beta[i].abs()).sum();
    lin - 0.5 * quad
}

/// Euclidean projection onto {0 ≤ α ≤ C, sᵀα = 0} by bisection on the multiplier.
fn project(z: &[f64], s: &[f64], c: f64) -> Vec<f64> {
    let eval = |lam: f64| -> f64 {
        z.iter().zip(s).map(|(&zt, &st)| st * (zt - lam * st).clamp(0.0, c)).sum()
    };
    let span = z.iter().fold(0.0f64, |m, v| m.max(v.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lam = 0.5 * (lo + hi);
    let mut a: Vec<f64> = z.iter().zip(s).map(|(&zt, &st)| (zt - lam * st).clamp(0.0, c)).collect();
    // Remove the residual of the equality constraint with a free variable.
    let resid: f64 = a.iter().zip(s).map(|(x, y)| x * y).sum();
    if resid.abs() > 0.0 {
        if let Some(t) = (0..a.len()).find(|&t| a[t] > 1e-12 && a[t] < c - 1e-12) {
            a[t] = (a[t] - s[t] * resid).clamp(0.0, c);
        }
    }
    a
}

pub fn solve(x: &[Vec<f64>], y: &[f64], c: f64, eps: f64, gamma: f64, max_iter: usize) -> QpSolution {
    let n = y.len();
    let l = 2 * n;
    let k = kernel_matrix(x, gamma);
    let s: Vec<f64> = (0..l).map(|t| if t < n { 1.0 } else { -1.0 }).collect();
    let p: Vec<f64> = (0..l).map(|t| if t < n { eps - y[t] } else { eps + y[t - n] }).collect();
    let qm: Vec<Vec<f64>> = (0..l).map(|t| (0..l).map(|u| s[t] * s[u] * k[t % n][u % n]).collect()).collect();
    let q = |t: usize, u: usize| qm[t][u];
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..l).map(|t| p[t] + qm[t].iter().zip(a).map(|(x, y)| x * y).sum::<f64>()).collect()
    };
    let obj = |a: &[f64]| -> f64 {
        let g = grad(a);
        0.5 * (0..l).map(|t| a[t] * (g[t] + p[t])).sum::<f64>()
    };

    // Lipschitz constant: largest eigenvalue of Q by power iteration.
    let mut v = vec![1.0; l];
    let mut lip = 1.0;
    for _ in 0..200 {
        let w: Vec<f64> = (0..l).map(|t| (0..l).map(|u| q(t, u) * v[u]).sum()).collect();
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm == 0.0 {
            break;
        }
        lip = nrm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / nrm).collect();
    }
    let step = 1.0 / (lip * 1.01 + 1e-12);

    let mut a = vec![0.0; l];
    let mut yk = a.clone();
    let mut tk = 1.0f64;
    let mut iterations = 0;
    let mut last = obj(&a);
    for it in 0..max_iter {
        iterations = it + 1;
        let g = grad(&yk);
        let z: Vec<f64> = (0..l).map(|t| yk[t] - step * g[t]).collect();
        let a_next = project(&z, &s, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        // Restart momentum when it points uphill.
        let uphill: f64 = (0..l).map(|t| (yk[t] - a_next[t]) * (a_next[t] - a[t])).sum();
        if uphill > 0.0 {
            yk = a_next.clone();
            tk = 1.0;
        } else {
            let mom = (tk - 1.0) / t_next;
            yk = (0..l).map(|t| a_next[t] + mom * (a_next[t] - a[t])).collect();
            tk = t_next;
        }
        let moved: f64 = (0..l).map(|t| (a_next[t] - a[t]).abs()).fold(0.0, f64::max);
        a = a_next;
        if it % 50 == 0 {
            let cur = obj(&a);
            if moved < 1e-13 && (last - cur).abs() < 1e-15 {
                break;
            }
            last = cur;
        }
    }

    // Bias: average over free variables, else midpoint of the feasible interval.
    let g = grad(&a);
    let tol = 1e-8 * c.max(1.0);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut nf) = (0.0, 0usize);
    for t in 0..l {
        let yg = s[t] * g[t];
        if a[t] >= c - tol {
            if s[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if a[t] <= tol {
            if s[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            sum += yg;
            nf += 1;
        }
    }
    let rho = if nf > 0 { sum / nf as f64 } else { 0.5 * (ub + lb) };
    let beta: Vec<f64> = (0..n).map(|i| a[i] - a[i + n]).collect();
    let objective = dual_objective(&k, y, &beta, eps);
    QpSolution { beta, bias: -rho, objective, iterations }
}

pub fn predict(x: &[Vec<f64>], sol: &QpSolution, gamma: f64, at: &[f64]) -> f64 {
    sol.bias + x.iter().zip(&sol.beta).map(|(xi, b)| b * rbf(xi, at, gamma)).sum::<f64>()
}
