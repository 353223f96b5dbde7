#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triple_scorer::corpus::{normalize_sentence, Relation, ScoredTriple};
use triple_scorer::embed::{train_cbow, CbowConfig, EmbeddingTable};
use triple_scorer::eval::{
    accuracy_within_2, avg_score_difference, baseline_majority_vote, baseline_random_guess, k_fold_cv,
    kendall_tau_distance, ScoreDistribution,
};
use triple_scorer::kbfeat::incremental_pca_fit_dense;
use triple_scorer::scorer::{fit_ensemble_weights, fit_pipeline, transform_score, PipelineSpec};
use triple_scorer::svr::{Gamma, SvrConfig};
use triple_scorer::Warnings;
use triple_scorer_cli::commands::cmd_stats;
use triple_scorer_cli::config::RunConfig;

/// Outcome of one criterion.
enum Outcome {
    Pass(String),
    Fail(String),
    Skipped(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within_budget(outcome: Outcome, elapsed: Duration, budget: Option<Duration>) -> Outcome {
    match (outcome, budget) {
        (Outcome::Pass(d), Some(b)) if elapsed > b => {
            Outcome::Fail(format!("{d}; took {:.2}s, budget {:.0}s", elapsed.as_secs_f64(), b.as_secs_f64()))
        }
        (o, _) => o,
    }
}

fn labeled(person: &str, value: &str, score: u8) -> ScoredTriple {
    ScoredTriple::labeled(person, Relation::Profession, value, score)
}

fn metric_fixtures() -> Outcome {
    let mut failures = Vec::new();
    let mut expect = |name: &str, got: f64, want: f64| {
        if got != want {
            failures.push(format!("{name}: got {got}, want {want}"));
        }
    };
    expect("avgdiff [5,6,2]/[7,4,2]", avg_score_difference(&[5, 6, 2], &[7, 4, 2]).unwrap(), 4.0 / 3.0);
    expect("avgdiff identical", avg_score_difference(&[3, 1, 7], &[3, 1, 7]).unwrap(), 0.0);
    expect("avgdiff [0]/[7]", avg_score_difference(&[0], &[7]).unwrap(), 7.0);
    expect("acc [5]/[7]", accuracy_within_2(&[5], &[7]).unwrap(), 1.0);
    expect("acc [4]/[7]", accuracy_within_2(&[4], &[7]).unwrap(), 0.0);
    expect("acc [5,6,0]/[7,4,7]", accuracy_within_2(&[5, 6, 0], &[7, 4, 7]).unwrap(), 2.0 / 3.0);

    let pair = [labeled("p", "a", 7), labeled("p", "b", 4)];
    let mut w = Warnings::default();
    expect("tau inverted", kendall_tau_distance(&pair, &[5u8, 6], &mut w).unwrap().distance, 1.0);
    expect("tau tied", kendall_tau_distance(&pair, &[5u8, 5], &mut w).unwrap().distance, 0.5);
    let many = [
        labeled("p", "a", 7),
        labeled("p", "b", 4),
        labeled("p", "c", 1),
        labeled("q", "a", 2),
        labeled("q", "d", 6),
    ];
    let truth: Vec<u8> = many.iter().map(|t| t.score.unwrap()).collect();
    expect("tau perfect", kendall_tau_distance(&many, &truth, &mut w).unwrap().distance, 0.0);
    let errors = avg_score_difference(&[1], &[1, 2]).is_err() && accuracy_within_2(&[], &[]).is_err();
    if !errors {
        failures.push("length mismatch or empty input accepted".into());
    }
    check(failures.is_empty(), if failures.is_empty() { "12 fixtures exact".into() } else { failures.join("; ") })
}

const SVR_INSTANCES: u64 = 120;

fn svr_oracle() -> Outcome {
    let (mut worst_pred, mut worst_obj) = (0.0f64, 0.0f64);
    for seed in 0..SVR_INSTANCES {
        let c = oracles::svr_cases::compare(&oracles::svr_cases::random_instance(seed));
        worst_pred = worst_pred.max(c.max_pred_diff);
        worst_obj = worst_obj.max(c.objective_diff);
    }
    check(
        worst_pred < 1e-3 && worst_obj < 1e-4,
        format!("{SVR_INSTANCES} instances, max prediction gap {worst_pred:.2e}, max objective gap {worst_obj:.2e}"),
    )
}

fn svr_kkt() -> Outcome {
    let (mut sum, mut excess, mut residual) = (0.0f64, 0.0f64, 0.0f64);
    let mut bad = 0;
    for seed in 0..SVR_INSTANCES {
        let c = oracles::svr_cases::compare(&oracles::svr_cases::random_instance(seed));
        sum = sum.max(c.beta_sum.abs());
        excess = excess.max(c.max_box_excess);
        residual = residual.max(c.max_kkt_residual);
        if !(c.beta_sum.abs() < 1e-6 && c.max_box_excess <= 1e-9 && c.max_kkt_residual <= c.smo_tol) {
            bad += 1;
        }
    }
    check(
        bad == 0,
        format!(
            "{SVR_INSTANCES} instances, {bad} violating; max |sum beta| {sum:.1e}, box excess {excess:.1e}, KKT residual {residual:.1e}"
        ),
    )
}

fn pca_oracle() -> Outcome {
    let (mut angle, mut var) = (0.0f64, 0.0f64);
    for seed in 0..60 {
        let (data, k) = oracles::pca_cases::random_matrix(seed);
        let c = oracles::pca_cases::compare(&data, k, data.nrows());
        angle = angle.max(c.max_angle);
        var = var.max(c.max_variance_diff);
    }
    let data = oracles::pca_cases::low_rank_matrix(99, 50, 20, 3, 1e-4);
    let multi = oracles::pca_cases::compare(&data, 3, 12).max_angle;

    let line = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]];
    let m = incremental_pca_fit_dense::<f64>(&line, 1, 4).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let comp = m.components.row(0);
    let line_ok = (comp[0].abs() - h).abs() < 1e-12
        && (comp[0] - comp[1]).abs() < 1e-12
        && m.mean.iter().all(|&v| (v - 2.5).abs() < 1e-12);
    check(
        angle < 1e-6 && var < 1e-8 && multi < 1e-3 && line_ok,
        format!(
            "single batch: angle {angle:.1e}, variance {var:.1e}; multi-batch angle {multi:.1e}; line component ({:.6}, {:.6})",
            comp[0], comp[1]
        ),
    )
}

fn cbow_gradcheck() -> Outcome {
    let n = 60;
    let worst = (0..n).map(oracles::cbow_cases::max_relative_error).fold(0.0, f64::max);
    check(worst < 1e-4, format!("{n} configurations, max relative error {worst:.1e}"))
}

fn cbow_clusters() -> Outcome {
    let sentences = oracles::clusters::corpus(3, 2000, 10);
    let config = CbowConfig {
        dim: 20,
        window: 5,
        min_count: 1,
        negatives: 5,
        epochs: 5,
        sample: 0.0,
        seed: 7,
        ..CbowConfig::default()
    };
    let table: EmbeddingTable<f64> = train_cbow(|| sentences.iter(), &config).unwrap();
    let (within, cross) = oracles::clusters::cluster_cosines(&table);
    check(within - cross >= 0.2, format!("within {within:.3}, cross {cross:.3}, gap {:.3}", within - cross))
}

fn fuzz_line(rng: &mut ChaCha8Rng) -> String {
    const PIECES: &[&str] = &[
        "[", "]", "|", " ", "  ", "\t", ".", ",", "!", "?", "'", "\"", "(", ")", "_", "-", "a", "B", "zz", "Ünï",
        "日本", "42", "[Ada Lovelace|She]", "[X_Y|he]", "[broken|", "|]", "...", "é", "--", "__",
    ];
    let len = rng.gen_range(0..30);
    (0..len).map(|_| PIECES[rng.gen_range(0..PIECES.len())]).collect()
}

fn normalization() -> Outcome {
    let got = normalize_sentence("[Walter_Damrosch|He] brought back some Parisian taxi horns...").join(" ");
    let fixture_ok = got == "walter_damrosch brought back some parisian taxi horns";

    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2017);
    let lines: Vec<String> = (0..1000).map(|_| fuzz_line(&mut rng)).collect();
    fs::write(dir.path().join("raw.txt"), lines.join("\n") + "\n").unwrap();
    let config = RunConfig { paths: triple_scorer_cli::config::Paths { output_dir: dir.path().join("out"), ..Default::default() }, ..Default::default() };
    let (raw, once, twice) = (dir.path().join("raw.txt"), dir.path().join("once.txt"), dir.path().join("twice.txt"));
    let n = triple_scorer_cli::commands::cmd_preprocess(&config, &raw, &once).unwrap();
    triple_scorer_cli::commands::cmd_preprocess(&config, &once, &twice).unwrap();
    let idempotent = fs::read(&once).unwrap() == fs::read(&twice).unwrap();
    let direct = lines.iter().all(|l| {
        let a = normalize_sentence(l);
        normalize_sentence(&a.join(" ")) == a
    });
    check(
        fixture_ok && idempotent && direct && n == 1000,
        format!("fixture output \"{got}\"; {n} fuzz lines, idempotent: {}", idempotent && direct),
    )
}

fn reference_transform(x: f64) -> u8 {
    let r = if x >= 0.0 { (x + 0.5).floor() } else { (x - 0.5).ceil() };
    r.clamp(0.0, 7.0) as u8
}

fn rounding() -> Outcome {
    let mut mismatches = 0;
    for i in 0..=10_000u32 {
        let x = -2.0 + 11.0 * f64::from(i) / 10_000.0;
        let got = transform_score(x).unwrap();
        if got != reference_transform(x) || got > 7 {
            mismatches += 1;
        }
    }
    let halves_ok = transform_score(3.5f64).unwrap() == 4 && transform_score(-0.5f64).unwrap() == 0;
    let rejects = transform_score(f64::NAN).is_err();
    check(mismatches == 0 && halves_ok && rejects, format!("10001 grid points, {mismatches} mismatches"))
}

fn ensemble_ols() -> Outcome {
    let m = fit_ensemble_weights(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0], &[1.5f64, 1.5, 3.5, 3.5]).unwrap();
    let exact = (m.weights[0] - 0.5).abs() < 1e-9 && (m.weights[1] - 0.5).abs() < 1e-9 && m.intercept.abs() < 1e-9;
    let a = [1.0, 2.0, 3.0, 4.0];
    let d = fit_ensemble_weights(&a, &a, &[2.0f64, 4.0, 6.0, 8.0]).unwrap();
    let symmetric = (d.weights[0] - d.weights[1]).abs() < 1e-9
        && (d.weights[0] - 1.0).abs() < 1e-9
        && d.intercept.abs() < 1e-9;
    check(
        exact && symmetric,
        format!(
            "rank 3: w=({:.12}, {:.12}) c={:.1e}; a=b: w=({:.12}, {:.12}) c={:.1e}",
            m.weights[0], m.weights[1], m.intercept, d.weights[0], d.weights[1], d.intercept
        ),
    )
}

fn synthetic_benchmark() -> Outcome {
    let data = oracles::synthetic::generate(40, 30, 11);
    let sentences: Vec<Vec<String>> = data.corpus.iter().map(|l| normalize_sentence(l)).collect();
    let cbow = CbowConfig { dim: 20, window: 5, min_count: 1, epochs: 5, sample: 0.0, seed: 5, ..CbowConfig::default() };
    let table: EmbeddingTable<f64> = train_cbow(|| sentences.iter(), &cbow).unwrap();
    let spec = PipelineSpec {
        svr_wordvector: SvrConfig { c: 10.0, gamma: Gamma::Value(1.0), ..SvrConfig::default() },
        ..PipelineSpec::default()
    };
    let wv = k_fold_cv(
        &data.triples,
        5,
        17,
        |train, test, w| fit_pipeline(train, &spec, &table, None, w)?.predict(test, &table, None, w),
        &mut Warnings::default(),
    )
    .unwrap();
    let rg = k_fold_cv(
        &data.triples,
        5,
        17,
        |train, test, _| baseline_random_guess(&ScoreDistribution::from_triples(train)?, test, 17),
        &mut Warnings::default(),
    )
    .unwrap();
    let gap = wv.mean.acc - rg.mean.acc;
    check(
        gap >= 0.15,
        format!("{} triples, word vector acc {:.3}, random guess acc {:.3}, gap {gap:.3}", data.triples.len(), wv.mean.acc, rg.mean.acc),
    )
}

fn baselines() -> Outcome {
    let mut failures = Vec::new();
    let test = [labeled("x", "author", 0), labeled("y", "poet", 0)];
    for (scores, want) in [(&[7u8, 7, 5, 0][..], 7u8), (&[5], 5), (&[3, 3, 6, 6], 6)] {
        let train: Vec<ScoredTriple> = scores.iter().enumerate().map(|(i, &s)| labeled(&format!("p{i}"), "v", s)).collect();
        let got = baseline_majority_vote(&train, &test).unwrap();
        if got != vec![want; 2] {
            failures.push(format!("majority of {scores:?}: got {got:?}"));
        }
    }

    let train: Vec<ScoredTriple> = [7, 7, 7, 0].iter().enumerate().map(|(i, &s)| labeled(&format!("p{i}"), "author", s)).collect();
    let dist = ScoreDistribution::from_triples(&train).unwrap();
    let draws_test: Vec<ScoredTriple> = (0..10_000).map(|i| labeled(&format!("t{i}"), "author", 0)).collect();
    let draws = baseline_random_guess(&dist, &draws_test, 42).unwrap();
    let p7 = draws.iter().filter(|&&s| s == 7).count() as f64 / draws.len() as f64;
    if !(0.73..=0.77).contains(&p7) || draws.iter().any(|&s| s != 7 && s != 0) {
        failures.push(format!("author P(7) = {p7}"));
    }
    if baseline_random_guess(&dist, &draws_test, 42).unwrap() != draws {
        failures.push("random guess not reproducible".into());
    }

    // Multi-bin histogram: every score within four binomial standard deviations.
    let counts = [1usize, 0, 3, 2, 0, 5, 1, 4];
    let mut train = Vec::new();
    for (s, &c) in counts.iter().enumerate() {
        for j in 0..c {
            train.push(labeled(&format!("m{s}_{j}"), "mixed", s as u8));
        }
    }
    let dist_mixed = ScoreDistribution::from_triples(&train).unwrap();
    let mixed_test: Vec<ScoredTriple> = (0..10_000).map(|i| labeled(&format!("t{i}"), "mixed", 0)).collect();
    let draws = baseline_random_guess(&dist_mixed, &mixed_test, 7).unwrap();
    let total: usize = counts.iter().sum();
    let mut worst_z = 0.0f64;
    for (s, &c) in counts.iter().enumerate() {
        let p = c as f64 / total as f64;
        let observed = draws.iter().filter(|&&d| usize::from(d) == s).count() as f64;
        let sd = (10_000.0 * p * (1.0 - p)).sqrt();
        let z = if sd == 0.0 { if observed == 0.0 { 0.0 } else { f64::INFINITY } } else { (observed - 10_000.0 * p).abs() / sd };
        worst_z = worst_z.max(z);
    }
    if worst_z > 4.0 {
        failures.push(format!("mixed histogram deviation {worst_z:.2} sd"));
    }

    let point: Vec<ScoredTriple> = vec![labeled("p", "solo", 5), labeled("q", "other", 7)];
    let dist_point = ScoreDistribution::from_triples(&point[..1]).unwrap();
    let solo: Vec<ScoredTriple> = (0..100).map(|i| labeled(&format!("t{i}"), "solo", 0)).collect();
    if baseline_random_guess(&dist_point, &solo, 3).unwrap().iter().any(|&s| s != 5) {
        failures.push("point mass 5 violated".into());
    }
    let dist_global = ScoreDistribution::from_triples(&point[1..]).unwrap();
    if baseline_random_guess(&dist_global, &solo, 3).unwrap().iter().any(|&s| s != 7) {
        failures.push("global fallback 7 violated".into());
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("majority examples exact; author P(7) = {p7:.4}; max deviation {worst_z:.2} sd")
        } else {
            failures.join("; ")
        },
    )
}

fn cup_stats() -> Outcome {
    let Some(dir) = std::env::var_os("CUP_DATA_DIR").map(PathBuf::from) else {
        return Outcome::Skipped("set CUP_DATA_DIR to a directory holding profession.train and nationality.train".into());
    };
    let mut details = Vec::new();
    let mut ok = true;
    for (relation, file, persons, values) in
        [(Relation::Profession, "profession.train", 134, 137), (Relation::Nationality, "nationality.train", 77, 36)]
    {
        let path = dir.join(file);
        if !path.exists() {
            return Outcome::Skipped(format!("{} not found", path.display()));
        }
        let out = tempfile::tempdir().unwrap();
        let mut config = RunConfig { relation, ..RunConfig::default() };
        config.paths.output_dir = out.path().to_owned();
        match cmd_stats(&config, Some(&path)) {
            Ok(s) => {
                ok &= s.n_unique_persons == persons && s.n_unique_values == values;
                details.push(format!("{file}: {} persons, {} values", s.n_unique_persons, s.n_unique_values));
            }
            Err(e) => {
                ok = false;
                details.push(format!("{file}: {e:#}"));
            }
        }
    }
    check(ok, details.join("; "))
}

const DETERMINISM_CONFIG: &str = r#"
relation = "profession"
threads = 1

[cbow]
dim = 16
window = 4
min_count = 1
epochs = 4
sample = 0.0

[pca]
k = 3
batch = 8

[svr.wordvector]
c = 10.0
gamma = 1.0

[pipeline]
mode = "trained"
"#;

fn snapshot(dir: &Path, prefix: &str, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let name = format!("{prefix}{}", p.file_name().unwrap().to_string_lossy());
        if p.is_dir() {
            snapshot(&p, &format!("{name}/"), out);
        } else {
            out.insert(name, fs::read(&p).unwrap());
        }
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    oracles::synthetic::generate(12, 20, 4).write(root).unwrap();
    let q = |name: &str| toml::Value::String(root.join(name).display().to_string()).to_string();
    let config = format!(
        "{DETERMINISM_CONFIG}\n[paths]\ncorpus = {}\ntriples = {}\ntest_triples = {}\nkb = {}\noutput_dir = {}\n",
        q("corpus.txt"),
        q("triples.tsv"),
        q("triples.tsv"),
        q("kb.tsv"),
        q("out")
    );
    fs::write(root.join("run.toml"), config).unwrap();
    let cfg = root.join("run.toml").display().to_string();
    let raw = root.join("corpus.txt").display().to_string();
    let pre = root.join("out").join("corpus.norm.txt").display().to_string();
    let commands: Vec<Vec<String>> = vec![
        vec!["stats".into()],
        vec!["preprocess".into(), raw, pre],
        vec!["train-embeddings".into()],
        vec!["build-kb".into()],
        vec!["train".into()],
        vec!["predict".into()],
        vec!["evaluate".into()],
        vec!["cv".into()],
    ];
    let run = |head: &[&str], cmd: &[String]| {
        let args: Vec<String> = ["triple-scorer"].iter().chain(head).map(|s| s.to_string()).chain(cmd.iter().cloned()).collect();
        triple_scorer_cli::run(args)
    };
    for c in &commands {
        if let Err(e) = run(&["--config", &cfg], c) {
            return Outcome::Fail(format!("{}: {e:#}", c[0]));
        }
    }
    let mut first = BTreeMap::new();
    snapshot(&root.join("out"), "", &mut first);
    for c in &commands {
        let manifest = root.join("out").join("manifests").join(format!("{}.json", c[0])).display().to_string();
        if let Err(e) = run(&["--from-manifest", &manifest], c) {
            return Outcome::Fail(format!("rerun {}: {e:#}", c[0]));
        }
    }
    let mut second = BTreeMap::new();
    snapshot(&root.join("out"), "", &mut second);
    let differing: Vec<&String> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
    check(
        differing.is_empty() && first.len() == second.len(),
        if differing.is_empty() {
            format!("{} commands, {} artifacts bit-identical", commands.len(), first.len())
        } else {
            format!("differing artifacts: {differing:?}")
        },
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome, Option<Duration>);

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria: [Criterion; 13] = [
        (1, "metric fixtures", metric_fixtures, secs(1)),
        (2, "SVR matches QP oracle", svr_oracle, secs(60)),
        (3, "SVR KKT conditions", svr_kkt, None),
        (4, "incremental PCA matches SVD", pca_oracle, None),
        (5, "CBOW gradient check", cbow_gradcheck, secs(30)),
        (6, "CBOW cluster separation", cbow_clusters, secs(60)),
        (7, "sentence normalization", normalization, None),
        (8, "score rounding and clamping", rounding, None),
        (9, "ensemble least squares", ensemble_ols, None),
        (10, "synthetic benchmark beats random guess", synthetic_benchmark, secs(300)),
        (11, "baseline correctness", baselines, None),
        (12, "cup dataset statistics", cup_stats, None),
        (13, "rerun determinism", determinism, None),
    ];
    let mut failed = 0;
    for (id, name, f, budget) in criteria {
        let start = Instant::now();
        let outcome = within_budget(f(), start.elapsed(), budget);
        let t = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("[PASS] criterion {id:>2}: {name} ({d}) [{t:.2}s]"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("[FAIL] criterion {id:>2}: {name} ({d}) [{t:.2}s]");
            }
            Outcome::Skipped(d) => println!("[SKIP] criterion {id:>2}: {name} skipped ({d})"),
        }
    }
    println!("{} of 13 criteria failed", failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
