//! Central finite differences.

pub fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Independent CBOW negative-sampling loss over a flat parameter vector laid
/// out as [context vectors | target vector | negative vectors].
pub fn cbow_loss_flat(params: &[f64], n_ctx: usize, n_neg: usize, d: usize) -> f64 {
    let ctx = &params[..n_ctx * d];
    let target = &params[n_ctx * d..(n_ctx + 1) * d];
    let mut h = vec![0.0; d];
    for c in 0..n_ctx {
        for j in 0..d {
            h[j] += ctx[c * d + j] / n_ctx as f64;
        }
    }
    let dot = |u: &[f64]| u.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut loss = -sig(dot(target)).ln();
    for k in 0..n_neg {
        let u = &params[(n_ctx + 1 + k) * d..(n_ctx + 2 + k) * d];
        loss -= sig(-dot(u)).ln();
    }
    loss
}
