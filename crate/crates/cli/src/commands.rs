//! One function per subcommand. Each writes its artifact(s) plus a run manifest.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use triple_scorer::corpus::{
    build_vocabulary, dataset_stats, normalize_sentence, read_triples, write_scored, DatasetStats, ScoredTriple,
};
use triple_scorer::embed::{
    load_embeddings_text, most_similar, override_value_vectors, train_cbow_vocab, value_words, write_word2vec_text,
    EmbeddingFormat, EmbeddingTable, HybridLookup,
};
use triple_scorer::eval::{
    baseline_majority_vote, baseline_random_guess, evaluate, format_table, k_fold_cv, CvReport, EvalReport,
    ScoreDistribution,
};
use triple_scorer::kbfeat::{incremental_pca_fit, ingest_predicates, PcaModel};
use triple_scorer::scorer::{fit_pipeline, KbFeatureSource, KbFeatures, Pipeline, PipelineSources};
use triple_scorer::Warnings;

use crate::config::RunConfig;
use crate::manifest::{stamp_json, RunManifest};

pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const PCA_FILE: &str = "kb_pca.json";
pub const PIPELINE_FILE: &str = "pipeline.json";
pub const PREDICTIONS_FILE: &str = "predictions.tsv";
pub const STATS_FILE: &str = "stats.json";
pub const EVAL_FILE: &str = "eval_report.json";
pub const CV_FILE: &str = "cv_report.json";
pub const REPORT_FORMAT_VERSION: u32 = 1;

fn require_input<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = path.as_deref().with_context(|| format!("`paths.{key}` is not set"))?;
    if !p.exists() {
        bail!("input file {} (paths.{key}) does not exist", p.display());
    }
    Ok(p)
}

fn require_artifact(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing artifact {}; run `triple-scorer {producer}` first", path.display());
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_triples(config: &RunConfig, path: &Path) -> Result<Vec<ScoredTriple>> {
    read_triples(open(path)?, config.relation).with_context(|| format!("reading triples {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(serde_json::to_string_pretty(value)?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn report_warnings(command: &str, warnings: &Warnings) {
    for (kind, n) in warnings.summary() {
        eprintln!("{command}: warning: {kind} ({n}x)");
    }
}

fn finish(config: &RunConfig, command: &str, inputs: &[PathBuf], outputs: &[PathBuf], warnings: &Warnings) -> Result<()> {
    let m = RunManifest::write(config, command, inputs, outputs, warnings)?;
    report_warnings(command, warnings);
    log::info!("{command}: manifest {}", m.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsFile {
    format_version: u32,
    config_hash: String,
    relation: String,
    #[serde(flatten)]
    stats: DatasetStats,
}

pub fn format_stats(s: &DatasetStats) -> String {
    let mut out = String::new();
    out.push_str(&format!("triples         {}\n", s.n_triples));
    out.push_str(&format!("unique persons  {}\n", s.n_unique_persons));
    out.push_str(&format!("unique values   {}\n", s.n_unique_values));
    out.push_str("score  count\n");
    for (score, n) in s.score_histogram.iter().enumerate() {
        out.push_str(&format!("{score:>5}  {n}\n"));
    }
    out
}

pub fn cmd_stats(config: &RunConfig, triples: Option<&Path>) -> Result<DatasetStats> {
    let path = match triples {
        Some(p) => p.to_owned(),
        None => require_input(&config.paths.triples, "triples")?.to_owned(),
    };
    let t = load_triples(config, &path)?;
    let stats = dataset_stats(&t)?;
    print!("{}", format_stats(&stats));
    let out = config.output(STATS_FILE);
    let file = StatsFile {
        format_version: REPORT_FORMAT_VERSION,
        config_hash: config.hash()?,
        relation: config.relation.to_string(),
        stats: stats.clone(),
    };
    write_json(&out, &file)?;
    finish(config, "stats", &[path], &[out], &Warnings::default())?;
    Ok(stats)
}

pub fn cmd_preprocess(config: &RunConfig, input: &Path, output: &Path) -> Result<usize> {
    let reader = open(input)?;
    let mut w = create(output)?;
    let mut n = 0usize;
    for line in reader.lines() {
        let line = line?;
        w.write_all(normalize_sentence(&line).join(" ").as_bytes())?;
        w.write_all(b"\n")?;
        n += 1;
    }
    w.flush()?;
    finish(config, "preprocess", &[input.to_owned()], &[output.to_owned()], &Warnings::default())?;
    Ok(n)
}

/// Re-readable stream of normalized corpus sentences. Read errors end the
/// stream and are reported by [`CorpusStream::check`].
struct CorpusStream<'a> {
    path: &'a Path,
    error: Mutex<Option<String>>,
}

impl<'a> CorpusStream<'a> {
    fn sentences(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        let file = File::open(self.path);
        let lines = match file {
            Ok(f) => Some(BufReader::new(f).lines()),
            Err(e) => {
                *self.error.lock().expect("poisoned") = Some(e.to_string());
                None
            }
        };
        lines.into_iter().flatten().map_while(move |l| match l {
            Ok(l) => Some(normalize_sentence(&l)),
            Err(e) => {
                *self.error.lock().expect("poisoned") = Some(e.to_string());
                None
            }
        })
    }

    fn check(&self) -> Result<()> {
        match self.error.lock().expect("poisoned").take() {
            Some(e) => bail!("reading corpus {}: {e}", self.path.display()),
            None => Ok(()),
        }
    }
}

pub fn cmd_train_embeddings(config: &RunConfig) -> Result<EmbeddingTable<f64>> {
    let corpus = require_input(&config.paths.corpus, "corpus")?;
    let cbow = config.effective_cbow();
    let stream = CorpusStream { path: corpus, error: Mutex::new(None) };
    let vocab = build_vocabulary(stream.sentences(), cbow.min_count)?;
    stream.check()?;
    log::info!("vocabulary: {} tokens, {} words", vocab.len(), vocab.total_tokens());
    let table: EmbeddingTable<f64> = train_cbow_vocab(|| stream.sentences(), &vocab, &cbow)?;
    stream.check()?;

    let emb = config.output(EMBEDDINGS_FILE);
    let mut w = create(&emb)?;
    write_word2vec_text(&table, &mut w)?;
    w.flush()?;
    let voc = config.output(VOCAB_FILE);
    let mut w = create(&voc)?;
    vocab.write_tsv(&mut w)?;
    w.flush()?;
    finish(config, "train-embeddings", &[corpus.to_owned()], &[emb, voc], &Warnings::default())?;
    Ok(table)
}

pub fn cmd_build_kb(config: &RunConfig) -> Result<PcaModel<f64>> {
    let kb = require_input(&config.paths.kb, "kb")?;
    let matrix = ingest_predicates(open(kb)?).with_context(|| format!("reading KB {}", kb.display()))?;
    log::info!("KB matrix: {} entities x {} predicates", matrix.n_rows(), matrix.n_cols());
    let pca: PcaModel<f64> = incremental_pca_fit(&matrix, config.pca.k, config.pca.batch)?;
    let out = config.output(PCA_FILE);
    std::fs::create_dir_all(&config.paths.output_dir)?;
    std::fs::write(&out, stamp_json(&pca.to_json()?, &config.hash()?)?)?;
    finish(config, "build-kb", &[kb.to_owned()], &[out], &Warnings::default())?;
    Ok(pca)
}

/// Word store for the given triples: corpus vectors, with value words
/// overridden by external vectors when configured.
fn load_words(config: &RunConfig, triples: &[ScoredTriple], warnings: &mut Warnings) -> Result<(HybridLookup<f64>, Vec<PathBuf>)> {
    let emb = config.output(EMBEDDINGS_FILE);
    require_artifact(&emb, "train-embeddings")?;
    let base: EmbeddingTable<f64> = load_embeddings_text(&emb, EmbeddingFormat::Word2vecText, None, warnings)?;
    let mut inputs = vec![emb];
    let Some(ext_path) = &config.paths.external_embeddings else {
        return Ok((HybridLookup::from_base(base), inputs));
    };
    let ext_path = require_input(&config.paths.external_embeddings, "external_embeddings").map(|_| ext_path)?;
    let words: Vec<String> = triples.iter().flat_map(|t| value_words(&t.value).collect::<Vec<_>>()).collect();
    let keep: HashSet<String> = words.iter().cloned().collect();
    let format: EmbeddingFormat = config.external_format.parse()?;
    let ext: EmbeddingTable<f64> = load_embeddings_text(ext_path, format, Some(&keep), warnings)?;
    inputs.push(ext_path.clone());
    Ok((override_value_vectors(base, &ext, &words)?, inputs))
}

fn load_kb(config: &RunConfig) -> Result<(KbFeatures<f64>, Vec<PathBuf>)> {
    let pca_path = config.output(PCA_FILE);
    require_artifact(&pca_path, "build-kb")?;
    let kb = require_input(&config.paths.kb, "kb")?;
    let matrix = ingest_predicates(open(kb)?)?;
    let pca = PcaModel::from_json(&std::fs::read_to_string(&pca_path)?)?;
    Ok((KbFeatures::new(matrix, pca)?, vec![pca_path, kb.to_owned()]))
}

fn sources(config: &RunConfig, needs_kb: bool) -> Result<PipelineSources> {
    let abs = |p: &Path| -> Result<String> { Ok(std::fs::canonicalize(p)?.display().to_string()) };
    Ok(PipelineSources {
        embeddings: Some(EMBEDDINGS_FILE.into()),
        external_embeddings: config.paths.external_embeddings.as_deref().map(abs).transpose()?,
        external_format: config.paths.external_embeddings.as_ref().map(|_| config.external_format.clone()),
        kb: if needs_kb { config.paths.kb.as_deref().map(abs).transpose()? } else { None },
        pca: needs_kb.then(|| PCA_FILE.to_owned()),
    })
}

pub fn cmd_train(config: &RunConfig) -> Result<Pipeline<f64>> {
    let train_path = require_input(&config.paths.triples, "triples")?.to_owned();
    let train = load_triples(config, &train_path)?;
    let spec = config.pipeline_spec();
    let mut warnings = Warnings::default();
    let (words, mut inputs) = load_words(config, &train, &mut warnings)?;
    inputs.insert(0, train_path);
    let kb = if spec.needs_kb() {
        let (kb, paths) = load_kb(config)?;
        inputs.extend(paths);
        Some(kb)
    } else {
        None
    };
    let pipeline = fit_pipeline(&train, &spec, &words, kb.as_ref().map(|k| k as &dyn KbFeatureSource<f64>), &mut warnings)?;
    let hash = config.hash()?;
    let manifest_path = pipeline.save(&config.paths.output_dir, sources(config, spec.needs_kb())?, &hash)?;
    let mut outputs = vec![manifest_path];
    for s in &pipeline.scorers {
        let p = config.output(&format!("svr_{}.json", s.kind));
        std::fs::write(&p, stamp_json(&std::fs::read_to_string(&p)?, &hash)?)?;
        outputs.push(p);
    }
    finish(config, "train", &inputs, &outputs, &warnings)?;
    Ok(pipeline)
}

struct Loaded {
    pipeline: Pipeline<f64>,
    words: HybridLookup<f64>,
    kb: Option<KbFeatures<f64>>,
    inputs: Vec<PathBuf>,
}

fn load_pipeline(config: &RunConfig, triples: &[ScoredTriple], warnings: &mut Warnings) -> Result<Loaded> {
    let path = config.output(PIPELINE_FILE);
    require_artifact(&path, "train")?;
    let (pipeline, _) = Pipeline::<f64>::load(&path)?;
    if pipeline.relation != config.relation {
        bail!("pipeline was trained for {}, config asks for {}", pipeline.relation, config.relation);
    }
    let (words, mut inputs) = load_words(config, triples, warnings)?;
    inputs.insert(0, path);
    for s in &pipeline.scorers {
        inputs.push(config.output(&format!("svr_{}.json", s.kind)));
    }
    let kb = if pipeline.needs_kb() {
        let (kb, paths) = load_kb(config)?;
        inputs.extend(paths);
        Some(kb)
    } else {
        None
    };
    Ok(Loaded { pipeline, words, kb, inputs })
}

impl Loaded {
    fn predict(&self, triples: &[ScoredTriple], warnings: &mut Warnings) -> Result<Vec<u8>> {
        let kb = self.kb.as_ref().map(|k| k as &dyn KbFeatureSource<f64>);
        Ok(self.pipeline.predict(triples, &self.words, kb, warnings)?)
    }
}

fn test_path(config: &RunConfig, test: Option<&Path>) -> Result<PathBuf> {
    match test {
        Some(p) => Ok(p.to_owned()),
        None => Ok(require_input(&config.paths.test_triples, "test_triples")?.to_owned()),
    }
}

pub fn cmd_predict(config: &RunConfig, test: Option<&Path>, output: Option<&Path>) -> Result<Vec<u8>> {
    let test_path = test_path(config, test)?;
    let triples = load_triples(config, &test_path)?;
    let mut warnings = Warnings::default();
    let loaded = load_pipeline(config, &triples, &mut warnings)?;
    let scores = loaded.predict(&triples, &mut warnings)?;
    let out = output.map(Path::to_owned).unwrap_or_else(|| config.output(PREDICTIONS_FILE));
    let mut w = create(&out)?;
    write_scored(&mut w, &triples, &scores)?;
    w.flush()?;
    let mut inputs = vec![test_path];
    inputs.extend(loaded.inputs);
    finish(config, "predict", &inputs, &[out], &warnings)?;
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub format_version: u32,
    pub config_hash: String,
    pub relation: String,
    pub seeds: crate::config::Seeds,
    pub methods: BTreeMap<String, EvalReport>,
}

pub const METHOD_RANDOM: &str = "random guess";
pub const METHOD_MAJORITY: &str = "majority vote";

pub fn method_name(config: &RunConfig) -> String {
    match config.pipeline.mode {
        triple_scorer::scorer::PipelineMode::Single => format!("{} regression", config.pipeline.single_features),
        mode => format!("{mode} ensemble"),
    }
}

fn print_table(methods: &BTreeMap<String, EvalReport>) {
    let rows: Vec<(&str, &EvalReport)> = methods.iter().map(|(k, v)| (k.as_str(), v)).collect();
    print!("{}", format_table(&rows));
}

pub fn cmd_evaluate(config: &RunConfig, test: Option<&Path>) -> Result<EvalFile> {
    let test_path = test_path(config, test)?;
    let triples = load_triples(config, &test_path)?;
    let mut warnings = Warnings::default();
    let loaded = load_pipeline(config, &triples, &mut warnings)?;
    let pred = loaded.predict(&triples, &mut warnings)?;
    let mut methods = BTreeMap::new();
    methods.insert(method_name(config), evaluate(&triples, &pred, &mut warnings)?);
    let mut inputs = vec![test_path];
    if let Some(train_path) = config.paths.triples.as_ref().filter(|p| p.exists()) {
        let train = load_triples(config, train_path)?;
        let dist = ScoreDistribution::from_triples(&train)?;
        let rg = baseline_random_guess(&dist, &triples, config.seeds.shuffle)?;
        methods.insert(METHOD_RANDOM.into(), evaluate(&triples, &rg, &mut warnings)?);
        let mv = baseline_majority_vote(&train, &triples)?;
        methods.insert(METHOD_MAJORITY.into(), evaluate(&triples, &mv, &mut warnings)?);
        inputs.push(train_path.clone());
    }
    inputs.extend(loaded.inputs);
    let file = EvalFile {
        format_version: REPORT_FORMAT_VERSION,
        config_hash: config.hash()?,
        relation: config.relation.to_string(),
        seeds: config.seeds.clone(),
        methods,
    };
    print_table(&file.methods);
    let out = config.output(EVAL_FILE);
    write_json(&out, &file)?;
    finish(config, "evaluate", &inputs, &[out], &warnings)?;
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFile {
    pub format_version: u32,
    pub config_hash: String,
    pub relation: String,
    pub seeds: crate::config::Seeds,
    pub k: usize,
    pub methods: BTreeMap<String, CvReport>,
}

pub fn cmd_cv(config: &RunConfig) -> Result<CvFile> {
    let path = require_input(&config.paths.triples, "triples")?.to_owned();
    let data = load_triples(config, &path)?;
    let spec = config.pipeline_spec();
    let mut warnings = Warnings::default();
    let (words, mut inputs) = load_words(config, &data, &mut warnings)?;
    inputs.insert(0, path);
    let kb = if spec.needs_kb() {
        let (kb, paths) = load_kb(config)?;
        inputs.extend(paths);
        Some(kb)
    } else {
        None
    };
    let kb_ref = kb.as_ref().map(|k| k as &dyn KbFeatureSource<f64>);
    let (k, seed) = (config.cv.k, config.seeds.shuffle);

    let mut methods = BTreeMap::new();
    let pipeline_cv = k_fold_cv(
        &data,
        k,
        seed,
        |train, test, w| {
            let p = fit_pipeline(train, &spec, &words, kb_ref, w)?;
            p.predict(test, &words, kb_ref, w)
        },
        &mut warnings,
    )?;
    methods.insert(method_name(config), pipeline_cv);
    let rg = k_fold_cv(
        &data,
        k,
        seed,
        |train, test, _| baseline_random_guess(&ScoreDistribution::from_triples(train)?, test, seed),
        &mut Warnings::default(),
    )?;
    methods.insert(METHOD_RANDOM.into(), rg);
    let mv = k_fold_cv(&data, k, seed, |train, test, _| baseline_majority_vote(train, test), &mut Warnings::default())?;
    methods.insert(METHOD_MAJORITY.into(), mv);

    let file = CvFile {
        format_version: REPORT_FORMAT_VERSION,
        config_hash: config.hash()?,
        relation: config.relation.to_string(),
        seeds: config.seeds.clone(),
        k,
        methods,
    };
    let means: BTreeMap<String, EvalReport> = file.methods.iter().map(|(k, v)| (k.clone(), v.mean)).collect();
    print_table(&means);
    let out = config.output(CV_FILE);
    write_json(&out, &file)?;
    finish(config, "cv", &inputs, &[out], &warnings)?;
    Ok(file)
}

pub fn cmd_similar(config: &RunConfig, embeddings: Option<&Path>, word: &str, k: usize) -> Result<Vec<(String, f64)>> {
    let path = embeddings.map(Path::to_owned).unwrap_or_else(|| config.output(EMBEDDINGS_FILE));
    require_artifact(&path, "train-embeddings")?;
    let table: EmbeddingTable<f64> =
        load_embeddings_text(&path, EmbeddingFormat::Word2vecText, None, &mut Warnings::default())?;
    let hits = most_similar(&table, word, k)?;
    for (w, s) in &hits {
        println!("{w}\t{s:.6}");
    }
    Ok(hits)
}
