//! Dense linear algebra needed by PCA and the ensemble fit: a one-sided Jacobi
//! SVD and a least-squares solver with a pseudo-inverse fallback.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Thin singular value decomposition `A = U diag(S) Vᵀ`.
///
/// With `r = min(m, n)`: `u` is `m×r`, `s` has `r` non-increasing entries and
/// `vt` is `r×n`. Both `u` and `vt` have orthonormal columns/rows, including the
/// directions belonging to zero singular values.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Array2<T>,
    pub s: Array1<T>,
    pub vt: Array2<T>,
}

const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd<T: Scalar>(a: ArrayView2<'_, T>) -> Svd<T> {
    let (m, n) = a.dim();
    if m >= n {
        let (u, s, v) = jacobi_columns(a.to_owned());
        Svd { u, s, vt: v.reversed_axes() }
    } else {
        // Aᵀ = U' S V'ᵀ  =>  A = V' S U'ᵀ
        let (u_t, s, v_t) = jacobi_columns(a.t().to_owned());
        Svd { u: v_t, s, vt: u_t.reversed_axes() }
    }
}

/// Orthogonalizes the columns of `a` (m×n, m ≥ n) by plane rotations.
/// Returns (U m×n, S n, V n×n).
fn jacobi_columns<T: Scalar>(mut a: Array2<T>) -> (Array2<T>, Array1<T>, Array2<T>) {
    let (m, n) = a.dim();
    let mut v = Array2::<T>::eye(n);
    let eps = T::epsilon();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..m {
                    let x = a[[i, p]];
                    let y = a[[i, q]];
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let x = a[[i, p]];
                    let y = a[[i, q]];
                    a[[i, p]] = c * x - s * y;
                    a[[i, q]] = s * x + c * y;
                }
                for i in 0..n {
                    let x = v[[i, p]];
                    let y = v[[i, q]];
                    v[[i, p]] = c * x - s * y;
                    v[[i, q]] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = a
        .axis_iter(Axis(1))
        .map(|col| col.iter().map(|&x| x * x).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));

    let scale = norms.iter().fold(T::zero(), |acc, &x| acc.max(x));
    let cutoff = scale * eps * T::from_usize_lossy(m.max(n));
    let mut u = Array2::<T>::zeros((m, n));
    let mut s = Array1::<T>::zeros(n);
    let mut v_sorted = Array2::<T>::zeros((n, n));
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        v_sorted.column_mut(k).assign(&v.column(j));
        if norms[j] > cutoff {
            s[k] = norms[j];
            u.column_mut(k).assign(&a.column(j).mapv(|x| x / norms[j]));
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal_columns(&mut u, &missing);
    (u, s, v_sorted)
}

/// Fills the listed columns of `q` with unit vectors orthogonal to all other
/// columns (Gram-Schmidt over the standard basis).
fn complete_orthonormal_columns<T: Scalar>(q: &mut Array2<T>, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let (m, n) = q.dim();
    let mut filled: Vec<usize> = (0..n).filter(|j| !missing.contains(j)).collect();
    let mut basis = 0;
    for &k in missing {
        while basis < m {
            let mut cand = Array1::<T>::zeros(m);
            cand[basis] = T::one();
            basis += 1;
            for _ in 0..2 {
                for &j in &filled {
                    let col = q.column(j);
                    let proj = col.dot(&cand);
                    cand.scaled_add(-proj, &col);
                }
            }
            let nrm = cand.dot(&cand).sqrt();
            if nrm > T::lit(1e-3) {
                q.column_mut(k).assign(&cand.mapv(|x| x / nrm));
                filled.push(k);
                break;
            }
        }
    }
}

/// Least-squares solution of `X w ≈ y`.
///
/// Solves the normal equations when `XᵀX` is well conditioned and falls back
/// to the minimum-norm pseudo-inverse solution otherwise.
pub fn least_squares<T: Scalar>(x: ArrayView2<'_, T>, y: &[T]) -> Result<Vec<T>> {
    let (m, n) = x.dim();
    if y.len() != m {
        return Err(Error::DimensionMismatch { expected: m, actual: y.len() });
    }
    let yv = Array1::from(y.to_vec());
    let xtx = x.t().dot(&x);
    let xty = x.t().dot(&yv);
    if let Some(w) = solve_spd(xtx, xty) {
        return Ok(w);
    }
    let d = svd(x);
    let smax = d.s.iter().fold(T::zero(), |a, &b| a.max(b));
    let cutoff = smax * T::epsilon() * T::from_usize_lossy(m.max(n)) * T::lit(10.0);
    let uty = d.u.t().dot(&yv);
    let mut w = Array1::<T>::zeros(n);
    for k in 0..d.s.len() {
        if d.s[k] > cutoff {
            w.scaled_add(uty[k] / d.s[k], &d.vt.row(k));
        }
    }
    Ok(w.to_vec())
}

/// Cholesky solve; `None` when the matrix is numerically rank deficient.
fn solve_spd<T: Scalar>(a: Array2<T>, b: Array1<T>) -> Option<Vec<T>> {
    let n = a.nrows();
    let max_diag = (0..n).fold(T::zero(), |acc, i| acc.max(a[[i, i]].abs()));
    let tiny = max_diag * T::epsilon().sqrt() * T::lit(1e-2);
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > tiny) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    let mut z = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * z[k];
        }
        z[i] = s / l[[i, i]];
    }
    let mut w = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[[k, i]] * w[k];
        }
        w[i] = s / l[[i, i]];
    }
    Some(w)
}
