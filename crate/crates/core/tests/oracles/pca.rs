//! Batch PCA through nalgebra's SVD of the centered data matrix.

use nalgebra::DMatrix;

pub struct BatchPca {
    pub mean: Vec<f64>,
    /// k rows of length d.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

pub fn batch_pca(rows: &[Vec<f64>], k: usize) -> BatchPca {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let svd = centered.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let denom = (n.max(2) - 1) as f64;
    let components = order.iter().take(k).map(|&i| vt.row(i).iter().copied().collect()).collect();
    let explained_variance = order.iter().take(k).map(|&i| svd.singular_values[i].powi(2) / denom).collect();
    let total_variance = centered.iter().map(|x| x * x).sum::<f64>() / denom;
    BatchPca { mean, components, explained_variance, total_variance }
}

/// Largest principal angle (radians) between the row spaces of `a` and `b`,
/// both with orthonormal rows.
pub fn max_principal_angle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let k = a.len();
    let m = DMatrix::<f64>::from_fn(k, b.len(), |i, j| a[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum::<f64>());
    let s = m.singular_values();
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min).clamp(-1.0, 1.0);
    // acos loses precision near 1; use the sine form instead.
    (1.0 - smin * smin).max(0.0).sqrt().asin()
}
