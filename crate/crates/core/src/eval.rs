//! Cup metrics (AvgDiff, Acc, Kendall tau distance), the random-guess and
//! majority-vote baselines, and k-fold cross-validation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Relation, ScoredTriple, MAX_SCORE};
use crate::error::{Error, Result};
use crate::warning::{Warning, Warnings};

const N_SCORES: usize = MAX_SCORE as usize + 1;

fn check_pair(pred: &[u8], truth: &[u8]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), actual: pred.len() });
    }
    if truth.is_empty() {
        return Err(Error::invalid("metric over zero triples"));
    }
    Ok(())
}

/// Mean absolute score difference.
pub fn avg_score_difference(pred: &[u8], truth: &[u8]) -> Result<f64> {
    check_pair(pred, truth)?;
    let total: u64 = pred.iter().zip(truth).map(|(&p, &t)| p.abs_diff(t) as u64).sum();
    Ok(total as f64 / truth.len() as f64)
}

/// Fraction of predictions within 2 of the truth.
pub fn accuracy_within_2(pred: &[u8], truth: &[u8]) -> Result<f64> {
    check_pair(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(&p, &t)| p.abs_diff(t) <= 2).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSummary {
    pub distance: f64,
    pub n_groups: usize,
}

fn truth_scores(triples: &[ScoredTriple]) -> Result<Vec<u8>> {
    triples
        .iter()
        .map(|t| {
            t.score
                .ok_or_else(|| Error::invalid(format!("triple ({}, {}) has no true score", t.person, t.value)))
        })
        .collect()
}

/// Mean over (person, relation) groups of the fraction of inverted pairs.
///
/// Pairs tied in the truth are ignored; pairs tied only in the prediction
/// count one half. Groups without a comparable pair are skipped. Only the order
/// of `pred` within a group matters.
pub fn kendall_tau_distance<P: PartialOrd + Copy>(
    triples: &[ScoredTriple],
    pred: &[P],
    warnings: &mut Warnings,
) -> Result<TauSummary> {
    if pred.len() != triples.len() {
        return Err(Error::DimensionMismatch { expected: triples.len(), actual: pred.len() });
    }
    let truth = truth_scores(triples)?;
    let mut groups: BTreeMap<(&str, Relation), Vec<usize>> = BTreeMap::new();
    for (i, t) in triples.iter().enumerate() {
        groups.entry((t.person.as_str(), t.relation)).or_default().push(i);
    }
    let mut sum = 0.0;
    let mut n_groups = 0usize;
    for members in groups.values() {
        let (mut comparable, mut inverted) = (0usize, 0.0f64);
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                if truth[i] == truth[j] {
                    continue;
                }
                comparable += 1;
                let (hi, lo) = if truth[i] > truth[j] { (i, j) } else { (j, i) };
                if pred[hi] < pred[lo] {
                    inverted += 1.0;
                } else if !(pred[hi] > pred[lo]) {
                    inverted += 0.5;
                }
            }
        }
        if comparable > 0 {
            sum += inverted / comparable as f64;
            n_groups += 1;
        }
    }
    if n_groups == 0 {
        warnings.push(Warning::NoTauGroups);
        return Ok(TauSummary { distance: 0.0, n_groups: 0 });
    }
    Ok(TauSummary { distance: sum / n_groups as f64, n_groups })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub avg_diff: f64,
    pub acc: f64,
    pub tau: f64,
    pub n_triples: usize,
    pub n_tau_groups: usize,
}

pub fn evaluate(truth: &[ScoredTriple], pred: &[u8], warnings: &mut Warnings) -> Result<EvalReport> {
    let t = truth_scores(truth)?;
    let tau = kendall_tau_distance(truth, pred, warnings)?;
    Ok(EvalReport {
        avg_diff: avg_score_difference(pred, &t)?,
        acc: accuracy_within_2(pred, &t)?,
        tau: tau.distance,
        n_triples: truth.len(),
        n_tau_groups: tau.n_groups,
    })
}

/// Training score histograms, per value and overall.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub per_value: BTreeMap<String, [usize; N_SCORES]>,
    pub global: [usize; N_SCORES],
}

impl ScoreDistribution {
    pub fn from_triples(train: &[ScoredTriple]) -> Result<Self> {
        let mut d = Self::default();
        for (t, s) in train.iter().zip(truth_scores(train)?) {
            d.per_value.entry(t.value.clone()).or_insert([0; N_SCORES])[s as usize] += 1;
            d.global[s as usize] += 1;
        }
        Ok(d)
    }

    pub fn total(&self) -> usize {
        self.global.iter().sum()
    }

    pub fn histogram_for(&self, value: &str) -> &[usize; N_SCORES] {
        self.per_value.get(value).unwrap_or(&self.global)
    }
}

fn sample_histogram(hist: &[usize; N_SCORES], rng: &mut impl Rng) -> u8 {
    let total: usize = hist.iter().sum();
    let mut u = rng.gen_range(0..total);
    for (s, &c) in hist.iter().enumerate() {
        if u < c {
            return s as u8;
        }
        u -= c;
    }
    unreachable!("u < total")
}

/// Samples each test score from its value's training histogram, falling back
/// to the global histogram for unseen values.
pub fn baseline_random_guess(dist: &ScoreDistribution, test: &[ScoredTriple], seed: u64) -> Result<Vec<u8>> {
    if dist.total() == 0 {
        return Err(Error::invalid("empty training score distribution"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(test.iter().map(|t| sample_histogram(dist.histogram_for(&t.value), &mut rng)).collect())
}

/// Most frequent training score, ties going to the larger score.
pub fn majority_score(train: &[ScoredTriple]) -> Result<u8> {
    if train.is_empty() {
        return Err(Error::invalid("majority vote needs training triples"));
    }
    let d = ScoreDistribution::from_triples(train)?;
    let best = (0..N_SCORES).rev().max_by_key(|&s| (d.global[s], s)).expect("non-empty range");
    Ok(best as u8)
}

pub fn baseline_majority_vote(train: &[ScoredTriple], test: &[ScoredTriple]) -> Result<Vec<u8>> {
    let s = majority_score(train)?;
    Ok(vec![s; test.len()])
}

/// Seeded shuffle into `k` contiguous folds whose sizes differ by at most one.
pub fn cv_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold CV needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::invalid(format!("{n} triples cannot fill {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    /// Unweighted mean of the fold metrics; counts are summed.
    pub mean: EvalReport,
    pub folds: Vec<EvalReport>,
}

/// Runs `fit_predict(train, test, warnings)` on every fold.
pub fn k_fold_cv<F>(dataset: &[ScoredTriple], k: usize, seed: u64, mut fit_predict: F, warnings: &mut Warnings) -> Result<CvReport>
where
    F: FnMut(&[ScoredTriple], &[ScoredTriple], &mut Warnings) -> Result<Vec<u8>>,
{
    let folds = cv_folds(dataset.len(), k, seed)?;
    let mut in_fold = vec![0usize; dataset.len()];
    for (f, members) in folds.iter().enumerate() {
        for &i in members {
            in_fold[i] = f;
        }
    }
    let mut reports = Vec::with_capacity(k);
    for (f, members) in folds.iter().enumerate() {
        let train: Vec<ScoredTriple> =
            (0..dataset.len()).filter(|&i| in_fold[i] != f).map(|i| dataset[i].clone()).collect();
        let test: Vec<ScoredTriple> = members.iter().map(|&i| dataset[i].clone()).collect();
        let pred = fit_predict(&train, &test, warnings)?;
        reports.push(evaluate(&test, &pred, warnings)?);
    }
    Ok(CvReport { k, seed, mean: mean_report(&reports), folds: reports })
}

pub fn mean_report(reports: &[EvalReport]) -> EvalReport {
    let n = reports.len().max(1) as f64;
    EvalReport {
        avg_diff: reports.iter().map(|r| r.avg_diff).sum::<f64>() / n,
        acc: reports.iter().map(|r| r.acc).sum::<f64>() / n,
        tau: reports.iter().map(|r| r.tau).sum::<f64>() / n,
        n_triples: reports.iter().map(|r| r.n_triples).sum(),
        n_tau_groups: reports.iter().map(|r| r.n_tau_groups).sum(),
    }
}

/// Aligned `Method | AvgDiff | Acc | Tau` table.
pub fn format_table(rows: &[(&str, &EvalReport)]) -> String {
    let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max("Method".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>8}", "Method", "AvgDiff", "Acc", "Tau");
    let _ = writeln!(out, "{}", "-".repeat(width + 30));
    for (m, r) in rows {
        let _ = writeln!(out, "{:<width$}  {:>8.3}  {:>8.3}  {:>8.3}", m, r.avg_diff, r.acc, r.tau);
    }
    out
}
