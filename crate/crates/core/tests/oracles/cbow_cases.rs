//! Random CBOW configurations checked against finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triple_scorer::embed::cbow_loss_and_gradients;

use super::fd::{cbow_loss_flat, central_diff};

pub fn max_relative_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(1..=8);
    let n_ctx = rng.gen_range(1..=6);
    let n_neg = rng.gen_range(0..=5);
    let total = (n_ctx + 1 + n_neg) * d;
    let params: Vec<f64> = (0..total).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ctx: Vec<&[f64]> = (0..n_ctx).map(|c| &params[c * d..(c + 1) * d]).collect();
    let target = &params[n_ctx * d..(n_ctx + 1) * d];
    let negs: Vec<&[f64]> = (0..n_neg).map(|k| &params[(n_ctx + 1 + k) * d..(n_ctx + 2 + k) * d]).collect();
    let (loss, g) = cbow_loss_and_gradients(&ctx, target, &negs);
    assert!((loss - cbow_loss_flat(&params, n_ctx, n_neg, d)).abs() < 1e-12);

    let mut analytic = Vec::with_capacity(total);
    for _ in 0..n_ctx {
        analytic.extend_from_slice(&g.context);
    }
    analytic.extend_from_slice(&g.target);
    for n in &g.negatives {
        analytic.extend_from_slice(n);
    }
    let numeric = central_diff(|p| cbow_loss_flat(p, n_ctx, n_neg, d), &params, 1e-5);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
