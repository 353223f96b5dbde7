//! Random PCA instances compared against the batch SVD oracle.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triple_scorer::kbfeat::incremental_pca_fit_dense;

use super::pca::{batch_pca, max_principal_angle};

#[derive(Debug)]
pub struct PcaComparison {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub max_angle: f64,
    pub max_variance_diff: f64,
}

fn rows_of(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// Dense random matrix with clearly separated singular values.
pub fn random_matrix(seed: u64) -> (Array2<f64>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(6..=50);
    let d = rng.gen_range(2..=20);
    let k = rng.gen_range(1..=5usize.min(d).min(n - 1));
    let scales: Vec<f64> = (0..d).map(|j| 3.0 / (1.0 + j as f64)).collect();
    let a = Array2::from_shape_fn((n, d), |(_, j)| rng.gen_range(-1.0..1.0) * scales[j] + 0.5);
    (a, k)
}

/// Rank-k signal plus small isotropic noise.
pub fn low_rank_matrix(seed: u64, n: usize, d: usize, k: usize, noise: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = Array2::from_shape_fn((k, d), |_| rng.gen_range(-1.0..1.0));
    let coef = Array2::from_shape_fn((n, k), |(_, j)| rng.gen_range(-1.0..1.0) * (k - j) as f64 * 2.0);
    let noise = Array2::from_shape_fn((n, d), |_| rng.gen_range(-noise..noise));
    coef.dot(&basis) + noise + 1.0
}

pub fn compare(data: &Array2<f64>, k: usize, batch: usize) -> PcaComparison {
    let (n, d) = data.dim();
    let model = incremental_pca_fit_dense(data, k, batch).expect("ipca");
    let oracle = batch_pca(&rows_of(data), k);
    let ours = rows_of(&model.components);
    let ev = model.explained_variance();
    let max_variance_diff = ev
        .iter()
        .zip(&oracle.explained_variance)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    PcaComparison { n, d, k, max_angle: max_principal_angle(&ours, &oracle.components), max_variance_diff }
}
