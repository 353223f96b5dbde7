//! Epsilon-insensitive support vector regression with an RBF kernel,
//! trained by sequential minimal optimization.
//!
//! The dual is solved in the doubled form used by LIBSVM: variables
//! `α ∈ [0, C]^{2n}` with signs `s_t = +1` for `t < n` and `-1` otherwise,
//!
//! ```text
//! min ½ αᵀQα + pᵀα   s.t.  sᵀα = 0,   Q_tu = s_t s_u K(x_t mod n, x_u mod n),
//! p_t = ε - y_t (t < n),   p_t = ε + y_{t-n} (t ≥ n).
//! ```
//!
//! The regression coefficients are `β_i = α_i - α_{i+n}` and the model is
//! `f(x) = Σ β_i K(x_i, x) + b`.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{squared_distance, Scalar};
use crate::warning::{Warning, Warnings};

/// RBF width: a fixed value or `1 / n_features`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gamma {
    Value(f64),
    Keyword(GammaKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaKeyword {
    #[serde(rename = "auto")]
    Auto,
}

impl Gamma {
    pub const AUTO: Gamma = Gamma::Keyword(GammaKeyword::Auto);

    pub fn resolve(self, n_features: usize) -> f64 {
        match self {
            Gamma::Value(g) => g,
            Gamma::Keyword(GammaKeyword::Auto) => 1.0 / n_features.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: Gamma,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Iteration cap, in units of `2n` SMO steps.
    pub max_passes: usize,
    /// Kernel row cache budget in megabytes.
    pub cache_mb: f64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self { c: 1.0, epsilon: 0.1, gamma: Gamma::AUTO, tol: 1e-3, max_passes: 10_000, cache_mb: 100.0 }
    }
}

impl SvrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.epsilon >= 0.0) || !(self.tol > 0.0) || self.max_passes == 0 {
            return Err(Error::invalid("need C > 0, epsilon >= 0, tol > 0, max_passes >= 1"));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::invalid("gamma must be positive"));
            }
        }
        Ok(())
    }
}

pub fn rbf_kernel<T: Scalar>(x: &[T], y: &[T], gamma: T) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), actual: y.len() });
    }
    Ok((-gamma * squared_distance(x, y)).exp())
}

pub const SVR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel<T> {
    /// `m×d`.
    pub support_vectors: Array2<T>,
    /// Nonzero `β_i`, each in `[-C, C]`.
    pub dual_coefs: Array1<T>,
    pub bias: T,
    pub gamma: T,
}

impl<T: Scalar> SvrModel<T> {
    pub fn n_features(&self) -> usize {
        self.support_vectors.ncols()
    }

    pub fn predict(&self, x: &[T]) -> Result<T> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), actual: x.len() });
        }
        let mut f = self.bias;
        for (sv, &beta) in self.support_vectors.rows().into_iter().zip(&self.dual_coefs) {
            let sv = sv.as_slice().expect("standard layout");
            f += beta * (-self.gamma * squared_distance(sv, x)).exp();
        }
        Ok(f)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SvrFile {
            format_version: SVR_FORMAT_VERSION,
            n_features: self.n_features(),
            gamma: self.gamma,
            bias: self.bias,
            dual_coefs: self.dual_coefs.to_vec(),
            support_vectors: self.support_vectors.rows().into_iter().map(|r| r.to_vec()).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: SvrFile<T> = serde_json::from_str(s)?;
        if f.format_version != SVR_FORMAT_VERSION {
            return Err(Error::FormatVersion { what: "SVR model", found: f.format_version, expected: SVR_FORMAT_VERSION });
        }
        let m = f.support_vectors.len();
        if f.dual_coefs.len() != m || f.support_vectors.iter().any(|r| r.len() != f.n_features) {
            return Err(Error::invalid("SVR file has inconsistent shapes"));
        }
        let flat: Vec<T> = f.support_vectors.into_iter().flatten().collect();
        Ok(SvrModel {
            support_vectors: Array2::from_shape_vec((m, f.n_features), flat).map_err(|e| Error::invalid(e.to_string()))?,
            dual_coefs: Array1::from(f.dual_coefs),
            bias: f.bias,
            gamma: f.gamma,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct SvrFile<T> {
    format_version: u32,
    n_features: usize,
    gamma: T,
    bias: T,
    dual_coefs: Vec<T>,
    support_vectors: Vec<Vec<T>>,
}

/// Least-recently-used cache of kernel rows.
struct KernelCache<'a, T> {
    x: ArrayView2<'a, T>,
    gamma: T,
    slots: Vec<Option<(Vec<T>, u64)>>,
    resident: usize,
    capacity: usize,
    clock: u64,
}

impl<'a, T: Scalar> KernelCache<'a, T> {
    fn new(x: ArrayView2<'a, T>, gamma: T, budget_mb: f64) -> Self {
        let n = x.nrows();
        let row_bytes = (n * std::mem::size_of::<T>()).max(1);
        let capacity = ((budget_mb * 1024.0 * 1024.0) as usize / row_bytes).clamp(2, n.max(2));
        Self { x, gamma, slots: vec![None; n], resident: 0, capacity, clock: 0 }
    }

    fn row(&mut self, i: usize) -> &[T] {
        self.clock += 1;
        if self.slots[i].is_none() {
            if self.resident == self.capacity {
                let victim = self
                    .slots
                    .iter()
                    .enumerate()
                    .filter_map(|(j, s)| s.as_ref().map(|(_, t)| (j, *t)))
                    .min_by_key(|&(_, t)| t)
                    .map(|(j, _)| j)
                    .expect("cache is full");
                self.slots[victim] = None;
                self.resident -= 1;
            }
            let xi = self.x.row(i);
            let xi = xi.as_slice().expect("standard layout");
            let row: Vec<T> = self
                .x
                .rows()
                .into_iter()
                .map(|xj| (-self.gamma * squared_distance(xi, xj.as_slice().expect("standard layout"))).exp())
                .collect();
            self.slots[i] = Some((row, 0));
            self.resident += 1;
        }
        let slot = self.slots[i].as_mut().expect("just filled");
        slot.1 = self.clock;
        &slot.0
    }
}

/// Raw dual solution, before support vectors are extracted.
#[derive(Debug, Clone)]
pub struct DualSolution<T> {
    /// `β_i = α_i − α_{i+n}` for every training point.
    pub beta: Vec<T>,
    pub bias: T,
    pub gamma: T,
    pub iterations: usize,
    /// Final maximal KKT violation `m(α) − M(α)`.
    pub gap: f64,
}

/// Dual objective `−½ βᵀKβ − ε Σ|β| + yᵀβ` (to be maximized).
pub fn dual_objective<T: Scalar>(x: ArrayView2<'_, T>, y: &[T], beta: &[T], epsilon: T, gamma: T) -> T {
    let n = y.len();
    let mut quad = T::zero();
    for i in 0..n {
        if beta[i] == T::zero() {
            continue;
        }
        let xi = x.row(i);
        let xi = xi.as_slice().expect("standard layout");
        for j in 0..n {
            if beta[j] != T::zero() {
                let xj = x.row(j);
                let k = (-gamma * squared_distance(xi, xj.as_slice().expect("standard layout"))).exp();
                quad += beta[i] * beta[j] * k;
            }
        }
    }
    let lin: T = beta.iter().zip(y).map(|(&b, &yi)| yi * b - epsilon * b.abs()).sum();
    lin - quad / T::lit(2.0)
}

fn check_inputs<T: Scalar>(x: ArrayView2<'_, T>, y: &[T]) -> Result<()> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::invalid("SVR needs at least one training point"));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: y.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SVR training data".into()));
    }
    Ok(())
}

/// Runs SMO and returns the dual solution for every training point.
pub fn svr_solve<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: &[T],
    config: &SvrConfig,
    warnings: &mut Warnings,
) -> Result<DualSolution<T>> {
    config.validate()?;
    check_inputs(x, y)?;
    let x = x.as_standard_layout();
    let n = y.len();
    let l = 2 * n;
    let c = T::from_f64_lossy(config.c);
    let eps = T::from_f64_lossy(config.epsilon);
    let gamma = T::from_f64_lossy(config.gamma.resolve(x.ncols()));
    let tau = T::lit(1e-12);
    let sign = |t: usize| if t < n { T::one() } else { -T::one() };

    let mut alpha = vec![T::zero(); l];
    let mut grad: Vec<T> = (0..l).map(|t| if t < n { eps - y[t] } else { eps + y[t - n] }).collect();
    let mut cache = KernelCache::new(x.view(), gamma, config.cache_mb);
    let max_iter = config.max_passes.saturating_mul(l.max(1));
    let tol = T::from_f64_lossy(config.tol);

    let mut iterations = 0usize;
    #[cfg(debug_assertions)]
    let mut last_obj = T::zero();
    let gap = loop {
        // Working set: i maximizes -s_t G_t over I_up; j minimizes the
        // second-order decrease estimate over I_low.
        let mut gmax = T::neg_infinity();
        let mut i_sel = None;
        for t in 0..l {
            let st = sign(t);
            let up = if st > T::zero() { alpha[t] < c } else { alpha[t] > T::zero() };
            if up && -st * grad[t] >= gmax {
                gmax = -st * grad[t];
                i_sel = Some(t);
            }
        }
        let mut gmax2 = T::neg_infinity();
        let mut j_sel = None;
        let mut best = T::infinity();
        if let Some(i) = i_sel {
            let k_i = cache.row(i % n).to_vec();
            for t in 0..l {
                let st = sign(t);
                let low = if st > T::zero() { alpha[t] > T::zero() } else { alpha[t] < c };
                if !low {
                    continue;
                }
                let v = st * grad[t];
                if v >= gmax2 {
                    gmax2 = v;
                }
                let diff = gmax + v;
                if diff > T::zero() {
                    // Q_ii + Q_tt - 2 s_i s_t Q_it with a unit kernel diagonal.
                    let quad = T::lit(2.0) - T::lit(2.0) * k_i[t % n];
                    let quad = if quad > T::zero() { quad } else { tau };
                    let dec = -(diff * diff) / quad;
                    if dec <= best {
                        best = dec;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let gap = gmax + gmax2;
        let (Some(i), Some(j)) = (i_sel, j_sel) else { break gap.to_f64_lossless().max(0.0) };
        if gap < tol {
            break gap.to_f64_lossless();
        }
        if iterations >= max_iter {
            let g = gap.to_f64_lossless();
            log::warn!("SMO stopped at the iteration cap ({iterations}), gap {g:.3e}");
            warnings.push(Warning::SmoIterationCap { iterations, gap: g });
            break g;
        }
        iterations += 1;

        let (s_i, s_j) = (sign(i), sign(j));
        let k_ij = cache.row(i % n)[j % n];
        let q_ij = s_i * s_j * k_ij;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if s_i != s_j {
            let quad = T::lit(2.0) + T::lit(2.0) * q_ij;
            let quad = if quad > T::zero() { quad } else { tau };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > T::zero() {
                if alpha[j] < T::zero() {
                    alpha[j] = T::zero();
                    alpha[i] = diff;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = -diff;
            }
            if diff > T::zero() {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = T::lit(2.0) - T::lit(2.0) * q_ij;
            let quad = if quad > T::zero() { quad } else { tau };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < T::zero() {
                alpha[j] = T::zero();
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = sum;
            }
        }
        let d_i = alpha[i] - old_i;
        let d_j = alpha[j] - old_j;
        let k_i = cache.row(i % n).to_vec();
        let k_j = cache.row(j % n);
        for t in 0..l {
            let st = sign(t);
            grad[t] += st * (s_i * k_i[t % n] * d_i + s_j * k_j[t % n] * d_j);
        }

        #[cfg(debug_assertions)]
        {
            // ½αᵀQα + pᵀα = ½ Σ α_t (G_t + p_t)
            let obj: T = (0..l)
                .map(|t| {
                    let p = if t < n { eps - y[t] } else { eps + y[t - n] };
                    alpha[t] * (grad[t] + p)
                })
                .sum::<T>()
                / T::lit(2.0);
            let slack = T::lit(1e-9) * (T::one() + obj.abs());
            debug_assert!(obj <= last_obj + slack, "SMO objective increased: {last_obj} -> {obj}");
            last_obj = obj;
        }
    };

    // Bias from free variables, or the midpoint of the feasible interval.
    let mut ub = T::infinity();
    let mut lb = T::neg_infinity();
    let mut free_sum = T::zero();
    let mut n_free = 0usize;
    for t in 0..l {
        let st = sign(t);
        let yg = st * grad[t];
        if alpha[t] >= c {
            if st < T::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= T::zero() {
            if st > T::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 { free_sum / T::from_usize_lossy(n_free) } else { (ub + lb) / T::lit(2.0) };
    let beta = (0..n).map(|i| alpha[i] - alpha[i + n]).collect();
    Ok(DualSolution { beta, bias: -rho, gamma, iterations, gap })
}

/// Fits an epsilon-SVR. Hitting the iteration cap records a warning and
/// returns the current model.
pub fn svr_fit<T: Scalar>(x: ArrayView2<'_, T>, y: &[T], config: &SvrConfig, warnings: &mut Warnings) -> Result<SvrModel<T>> {
    let sol = svr_solve(x, y, config, warnings)?;
    let keep: Vec<usize> = (0..y.len()).filter(|&i| sol.beta[i] != T::zero()).collect();
    let d = x.ncols();
    let mut support_vectors = Array2::<T>::zeros((keep.len(), d));
    for (r, &i) in keep.iter().enumerate() {
        support_vectors.row_mut(r).assign(&x.row(i));
    }
    Ok(SvrModel {
        support_vectors,
        dual_coefs: keep.iter().map(|&i| sol.beta[i]).collect(),
        bias: sol.bias,
        gamma: sol.gamma,
    })
}
