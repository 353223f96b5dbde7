//! Random SVR instances and the comparisons shared by the oracle tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triple_scorer::svr::{dual_objective, svr_solve, Gamma, SvrConfig};
use triple_scorer::Warnings;

use super::qp;

pub struct Instance {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=20);
    let d = rng.gen_range(1..=4);
    let x = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y = (0..n).map(|_| rng.gen_range(0.0..7.0)).collect();
    Instance {
        x,
        y,
        c: rng.gen_range(0.5..2.0),
        epsilon: rng.gen_range(0.05..0.3),
        gamma: rng.gen_range(0.3..2.0),
    }
}

#[derive(Debug, Default)]
pub struct Comparison {
    pub max_pred_diff: f64,
    pub objective_diff: f64,
    pub beta_sum: f64,
    pub max_box_excess: f64,
    pub max_kkt_residual: f64,
    pub smo_tol: f64,
}

pub const SMO_TOL: f64 = 1e-7;

pub fn compare(inst: &Instance) -> Comparison {
    let n = inst.y.len();
    let d = inst.x[0].len();
    let xa = Array2::from_shape_fn((n, d), |(i, j)| inst.x[i][j]);
    let config = SvrConfig {
        c: inst.c,
        epsilon: inst.epsilon,
        gamma: Gamma::Value(inst.gamma),
        tol: SMO_TOL,
        ..SvrConfig::default()
    };
    let mut warnings = Warnings::default();
    let sol = svr_solve(xa.view(), &inst.y, &config, &mut warnings).expect("smo");
    let oracle = qp::solve(&inst.x, &inst.y, inst.c, inst.epsilon, inst.gamma, 400_000);

    let k = qp::kernel_matrix(&inst.x, inst.gamma);
    let f: Vec<f64> = (0..n).map(|i| sol.bias + (0..n).map(|j| sol.beta[j] * k[i][j]).sum::<f64>()).collect();
    let mut cmp = Comparison { smo_tol: SMO_TOL, ..Default::default() };
    for i in 0..n {
        let fo = qp::predict(&inst.x, &oracle, inst.gamma, &inst.x[i]);
        cmp.max_pred_diff = cmp.max_pred_diff.max((f[i] - fo).abs());
    }
    let obj = dual_objective(xa.view(), &inst.y, &sol.beta, inst.epsilon, inst.gamma);
    cmp.objective_diff = (obj - oracle.objective).abs();
    cmp.beta_sum = sol.beta.iter().sum::<f64>().abs();
    cmp.max_box_excess = sol.beta.iter().map(|b| b.abs() - inst.c).fold(f64::NEG_INFINITY, f64::max);

    // Epsilon-insensitive KKT conditions on the residual r = y − f.
    let bound = 1e-9;
    for i in 0..n {
        let r = inst.y[i] - f[i];
        let b = sol.beta[i];
        let viol = if b.abs() <= bound {
            (r.abs() - inst.epsilon).max(0.0)
        } else if b >= inst.c - bound {
            (inst.epsilon - r).max(0.0)
        } else if b <= -inst.c + bound {
            (r + inst.epsilon).max(0.0)
        } else if b > 0.0 {
            (r - inst.epsilon).abs()
        } else {
            (r + inst.epsilon).abs()
        };
        cmp.max_kkt_residual = cmp.max_kkt_residual.max(viol);
    }
    cmp
}
