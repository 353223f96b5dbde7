//! Feature assembly, per-family SVR scorers, two-model ensembles, score
//! transformation and fitted-pipeline persistence.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_entity, Relation, ScoredTriple, MAX_SCORE};
use crate::embed::{value_vector, WordLookup};
use crate::error::{Error, Result};
use crate::kbfeat::{PcaModel, SparseBinaryMatrix};
use crate::linalg::least_squares;
use crate::scalar::Scalar;
use crate::svr::{svr_fit, SvrConfig, SvrModel};
use crate::warning::{Warning, Warnings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// Person word vector ⊕ value vector.
    WordVector,
    /// PCA-reduced KB row ⊕ value vector.
    Freebase,
    /// Person word vector ⊕ PCA-reduced KB row ⊕ value vector.
    Joint,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::WordVector => "wordvector",
            FeatureKind::Freebase => "freebase",
            FeatureKind::Joint => "joint",
        }
    }

    pub fn uses_kb(self) -> bool {
        !matches!(self, FeatureKind::WordVector)
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wordvector" | "word_vector" => Ok(FeatureKind::WordVector),
            "freebase" | "kb" => Ok(FeatureKind::Freebase),
            "joint" => Ok(FeatureKind::Joint),
            other => Err(Error::invalid(format!("unknown feature kind `{other}`"))),
        }
    }
}

/// Reduced knowledge-base features for a person.
pub trait KbFeatureSource<T> {
    fn dim(&self) -> usize;
    /// `None` when the person has no KB row.
    fn person_features(&self, person: &str) -> Option<Vec<T>>;
}

/// Sparse KB matrix paired with its fitted PCA.
#[derive(Debug, Clone, PartialEq)]
pub struct KbFeatures<T> {
    pub matrix: SparseBinaryMatrix,
    pub pca: PcaModel<T>,
}

impl<T: Scalar> KbFeatures<T> {
    pub fn new(matrix: SparseBinaryMatrix, pca: PcaModel<T>) -> Result<Self> {
        if pca.n_features() != matrix.n_cols() {
            return Err(Error::DimensionMismatch { expected: matrix.n_cols(), actual: pca.n_features() });
        }
        Ok(Self { matrix, pca })
    }
}

impl<T: Scalar> KbFeatureSource<T> for KbFeatures<T> {
    fn dim(&self) -> usize {
        self.pca.n_components()
    }

    fn person_features(&self, person: &str) -> Option<Vec<T>> {
        let row = self.matrix.row_of(person)?;
        self.pca.transform_sparse(self.matrix.row(row)).ok()
    }
}

/// Builds dense feature vectors for triples from borrowed feature stores.
#[derive(Clone, Copy)]
pub struct FeatureAssembler<'a, T> {
    kind: FeatureKind,
    words: &'a dyn WordLookup<T>,
    kb: Option<&'a dyn KbFeatureSource<T>>,
}

impl<'a, T: Scalar> FeatureAssembler<'a, T> {
    pub fn new(kind: FeatureKind, words: &'a dyn WordLookup<T>, kb: Option<&'a dyn KbFeatureSource<T>>) -> Result<Self> {
        if kind.uses_kb() && kb.is_none() {
            return Err(Error::invalid(format!("{kind} features need a KB feature source")));
        }
        Ok(Self { kind, words, kb })
    }

    pub fn word_vector(words: &'a dyn WordLookup<T>) -> Self {
        Self { kind: FeatureKind::WordVector, words, kb: None }
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        let d = self.words.dim();
        let k = self.kb.map_or(0, |kb| kb.dim());
        match self.kind {
            FeatureKind::WordVector => 2 * d,
            FeatureKind::Freebase => k + d,
            FeatureKind::Joint => d + k + d,
        }
    }

    fn push_person_vector(&self, person: &str, out: &mut Vec<T>, warnings: &mut Warnings) {
        let d = self.words.dim();
        match self.words.person(&normalize_entity(person)) {
            Some(v) => out.extend_from_slice(v),
            None => {
                warnings.push(Warning::PersonOutOfVocabulary(person.to_owned()));
                out.extend(std::iter::repeat_n(T::zero(), d));
            }
        }
    }

    fn push_kb_vector(&self, person: &str, out: &mut Vec<T>, warnings: &mut Warnings) {
        let kb = self.kb.expect("checked at construction");
        match kb.person_features(person) {
            Some(v) => out.extend(v),
            None => {
                warnings.push(Warning::PersonMissingFromKb(person.to_owned()));
                out.extend(std::iter::repeat_n(T::zero(), kb.dim()));
            }
        }
    }

    /// Missing persons or values contribute zero sub-vectors and a warning.
    pub fn assemble(&self, triple: &ScoredTriple, warnings: &mut Warnings) -> Vec<T> {
        let mut out = Vec::with_capacity(self.dim());
        match self.kind {
            FeatureKind::WordVector => self.push_person_vector(&triple.person, &mut out, warnings),
            FeatureKind::Freebase => self.push_kb_vector(&triple.person, &mut out, warnings),
            FeatureKind::Joint => {
                self.push_person_vector(&triple.person, &mut out, warnings);
                self.push_kb_vector(&triple.person, &mut out, warnings);
            }
        }
        out.extend(value_vector(&triple.value, self.words, warnings));
        out
    }

    pub fn assemble_matrix(&self, triples: &[ScoredTriple], warnings: &mut Warnings) -> Array2<T> {
        let d = self.dim();
        let mut data = Vec::with_capacity(triples.len() * d);
        for t in triples {
            data.extend(self.assemble(t, warnings));
        }
        Array2::from_shape_vec((triples.len(), d), data).expect("assembled rows have the assembler dimension")
    }
}

/// One fitted regressor over one feature family.
#[derive(Debug, Clone, PartialEq)]
pub struct Scorer<T> {
    pub kind: FeatureKind,
    pub model: SvrModel<T>,
}

impl<T: Scalar> Scorer<T> {
    fn check(&self, assembler: &FeatureAssembler<'_, T>) -> Result<()> {
        if assembler.kind() != self.kind {
            return Err(Error::invalid(format!(
                "scorer expects {} features, assembler builds {}",
                self.kind,
                assembler.kind()
            )));
        }
        if assembler.dim() != self.model.n_features() {
            return Err(Error::DimensionMismatch { expected: self.model.n_features(), actual: assembler.dim() });
        }
        Ok(())
    }

    pub fn predict_raw(&self, triple: &ScoredTriple, assembler: &FeatureAssembler<'_, T>, warnings: &mut Warnings) -> Result<T> {
        self.check(assembler)?;
        self.model.predict(&assembler.assemble(triple, warnings))
    }

    pub fn predict_raw_all(
        &self,
        triples: &[ScoredTriple],
        assembler: &FeatureAssembler<'_, T>,
        warnings: &mut Warnings,
    ) -> Result<Vec<T>> {
        self.check(assembler)?;
        triples.iter().map(|t| self.model.predict(&assembler.assemble(t, warnings))).collect()
    }
}

fn labels<T: Scalar>(triples: &[ScoredTriple]) -> Result<Vec<T>> {
    triples
        .iter()
        .map(|t| {
            t.score
                .map(|s| T::from_usize_lossy(s as usize))
                .ok_or_else(|| Error::invalid(format!("training triple ({}, {}) has no score", t.person, t.value)))
        })
        .collect()
}

fn check_single_relation(triples: &[ScoredTriple]) -> Result<Relation> {
    let first = triples.first().ok_or_else(|| Error::invalid("no training triples"))?.relation;
    if let Some(t) = triples.iter().find(|t| t.relation != first) {
        return Err(Error::MixedRelations(first.to_string(), t.relation.to_string()));
    }
    Ok(first)
}

pub fn train_scorer<T: Scalar>(
    train: &[ScoredTriple],
    assembler: &FeatureAssembler<'_, T>,
    svr: &SvrConfig,
    warnings: &mut Warnings,
) -> Result<Scorer<T>> {
    check_single_relation(train)?;
    let y = labels(train)?;
    let x = assembler.assemble_matrix(train, warnings);
    let model = svr_fit(x.view(), &y, svr, warnings)?;
    Ok(Scorer { kind: assembler.kind(), model })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Average,
    Trained,
}

/// `w₁·a + w₂·b + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub kind: EnsembleKind,
    pub weights: [f64; 2],
    pub intercept: f64,
}

impl EnsembleModel {
    pub const AVERAGE: Self = Self { kind: EnsembleKind::Average, weights: [0.5, 0.5], intercept: 0.0 };

    pub fn trained(w1: f64, w2: f64, c: f64) -> Self {
        Self { kind: EnsembleKind::Trained, weights: [w1, w2], intercept: c }
    }

    pub fn combine<T: Scalar>(&self, a: T, b: T) -> T {
        match self.kind {
            EnsembleKind::Average => (a + b) / T::lit(2.0),
            EnsembleKind::Trained => {
                T::from_f64_lossy(self.weights[0]) * a
                    + T::from_f64_lossy(self.weights[1]) * b
                    + T::from_f64_lossy(self.intercept)
            }
        }
    }
}

pub fn ensemble_combine<T: Scalar>(a: T, b: T, model: &EnsembleModel) -> T {
    model.combine(a, b)
}

/// Least-squares fit of `truth ≈ w₁·a + w₂·b + c`.
pub fn fit_ensemble_weights<T: Scalar>(a: &[T], b: &[T], truth: &[T]) -> Result<EnsembleModel> {
    let n = truth.len();
    if a.len() != n || b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: a.len().min(b.len()) });
    }
    if n == 0 {
        return Err(Error::invalid("no rows for the ensemble fit"));
    }
    let mut x = Array2::<f64>::zeros((n, 3));
    for i in 0..n {
        x[[i, 0]] = a[i].to_f64_lossless();
        x[[i, 1]] = b[i].to_f64_lossless();
        x[[i, 2]] = 1.0;
    }
    let y: Vec<f64> = truth.iter().map(|v| v.to_f64_lossless()).collect();
    let w = least_squares(x.view(), &y)?;
    Ok(EnsembleModel::trained(w[0], w[1], w[2]))
}

/// Seeded 2:1 split, returned as (ensemble-training, held-out) index lists.
pub fn ensemble_split(n: usize, split_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let held = idx.split_off(2 * n / 3);
    (idx, held)
}

/// Result of fitting a trained ensemble: the weights and both scorers refit
/// on the full training data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEnsemble<T> {
    pub ensemble: EnsembleModel,
    pub a: Scorer<T>,
    pub b: Scorer<T>,
}

pub fn fit_trained_ensemble<T: Scalar>(
    train: &[ScoredTriple],
    (assembler_a, svr_a): (&FeatureAssembler<'_, T>, &SvrConfig),
    (assembler_b, svr_b): (&FeatureAssembler<'_, T>, &SvrConfig),
    split_seed: u64,
    warnings: &mut Warnings,
) -> Result<TrainedEnsemble<T>> {
    if train.len() < 3 {
        return Err(Error::invalid(format!("trained ensemble needs at least 3 triples, got {}", train.len())));
    }
    let (fit_idx, held_idx) = ensemble_split(train.len(), split_seed);
    let fit: Vec<ScoredTriple> = fit_idx.iter().map(|&i| train[i].clone()).collect();
    let held: Vec<ScoredTriple> = held_idx.iter().map(|&i| train[i].clone()).collect();

    let sa = train_scorer(&fit, assembler_a, svr_a, warnings)?;
    let sb = train_scorer(&fit, assembler_b, svr_b, warnings)?;
    let ra = sa.predict_raw_all(&held, assembler_a, warnings)?;
    let rb = sb.predict_raw_all(&held, assembler_b, warnings)?;
    let ensemble = fit_ensemble_weights(&ra, &rb, &labels::<T>(&held)?)?;

    let a = train_scorer(train, assembler_a, svr_a, warnings)?;
    let b = train_scorer(train, assembler_b, svr_b, warnings)?;
    Ok(TrainedEnsemble { ensemble, a, b })
}

/// Rounds half away from zero and clamps into `{0..7}`.
pub fn transform_score<T: Scalar>(raw: T) -> Result<u8> {
    if !raw.is_finite() {
        return Err(Error::NonFinite(format!("raw score {raw}")));
    }
    let r = raw.round().max(T::zero()).min(T::from_usize_lossy(MAX_SCORE as usize));
    Ok(r.to_u8().expect("clamped into 0..=7"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    /// One scorer, raw output passed through.
    Single,
    /// Word vector and KB scorers averaged.
    Average,
    /// Word vector and KB scorers combined by fitted weights.
    Trained,
    /// One scorer over concatenated word vector and KB features.
    Joint,
}

impl std::fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PipelineMode::Single => "single",
            PipelineMode::Average => "average",
            PipelineMode::Trained => "trained",
            PipelineMode::Joint => "joint",
        })
    }
}

impl std::str::FromStr for PipelineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(PipelineMode::Single),
            "average" => Ok(PipelineMode::Average),
            "trained" => Ok(PipelineMode::Trained),
            "joint" => Ok(PipelineMode::Joint),
            other => Err(Error::invalid(format!("unknown pipeline mode `{other}`"))),
        }
    }
}

/// What to fit: the mode plus per-family SVR settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSpec {
    pub mode: PipelineMode,
    /// Feature family of the scorer in single mode.
    pub single_features: FeatureKind,
    pub svr_wordvector: SvrConfig,
    pub svr_freebase: SvrConfig,
    pub svr_joint: SvrConfig,
    pub split_seed: u64,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            mode: PipelineMode::Single,
            single_features: FeatureKind::WordVector,
            svr_wordvector: SvrConfig::default(),
            svr_freebase: SvrConfig::default(),
            svr_joint: SvrConfig::default(),
            split_seed: 0,
        }
    }
}

impl PipelineSpec {
    pub fn svr_for(&self, kind: FeatureKind) -> &SvrConfig {
        match kind {
            FeatureKind::WordVector => &self.svr_wordvector,
            FeatureKind::Freebase => &self.svr_freebase,
            FeatureKind::Joint => &self.svr_joint,
        }
    }

    /// Feature families of the scorers, in ensemble order.
    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        match self.mode {
            PipelineMode::Single => vec![self.single_features],
            PipelineMode::Average | PipelineMode::Trained => vec![FeatureKind::WordVector, FeatureKind::Freebase],
            PipelineMode::Joint => vec![FeatureKind::Joint],
        }
    }

    pub fn needs_kb(&self) -> bool {
        self.feature_kinds().iter().any(|k| k.uses_kb())
    }
}

/// A fitted per-relation pipeline. Feature stores are supplied at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline<T> {
    pub relation: Relation,
    pub mode: PipelineMode,
    pub scorers: Vec<Scorer<T>>,
    pub ensemble: Option<EnsembleModel>,
}

pub fn fit_pipeline<T: Scalar>(
    train: &[ScoredTriple],
    spec: &PipelineSpec,
    words: &dyn WordLookup<T>,
    kb: Option<&dyn KbFeatureSource<T>>,
    warnings: &mut Warnings,
) -> Result<Pipeline<T>> {
    let relation = check_single_relation(train)?;
    let kinds = spec.feature_kinds();
    let assemblers = kinds
        .iter()
        .map(|&k| FeatureAssembler::new(k, words, if k.uses_kb() { kb } else { None }))
        .collect::<Result<Vec<_>>>()?;
    let (scorers, ensemble) = match spec.mode {
        PipelineMode::Single | PipelineMode::Joint => {
            (vec![train_scorer(train, &assemblers[0], spec.svr_for(kinds[0]), warnings)?], None)
        }
        PipelineMode::Average => {
            let a = train_scorer(train, &assemblers[0], spec.svr_for(kinds[0]), warnings)?;
            let b = train_scorer(train, &assemblers[1], spec.svr_for(kinds[1]), warnings)?;
            (vec![a, b], Some(EnsembleModel::AVERAGE))
        }
        PipelineMode::Trained => {
            let t = fit_trained_ensemble(
                train,
                (&assemblers[0], spec.svr_for(kinds[0])),
                (&assemblers[1], spec.svr_for(kinds[1])),
                spec.split_seed,
                warnings,
            )?;
            (vec![t.a, t.b], Some(t.ensemble))
        }
    };
    Ok(Pipeline { relation, mode: spec.mode, scorers, ensemble })
}

impl<T: Scalar> Pipeline<T> {
    pub fn needs_kb(&self) -> bool {
        self.scorers.iter().any(|s| s.kind.uses_kb())
    }

    pub fn predict_raw(
        &self,
        triples: &[ScoredTriple],
        words: &dyn WordLookup<T>,
        kb: Option<&dyn KbFeatureSource<T>>,
        warnings: &mut Warnings,
    ) -> Result<Vec<T>> {
        if let Some(t) = triples.iter().find(|t| t.relation != self.relation) {
            return Err(Error::MixedRelations(self.relation.to_string(), t.relation.to_string()));
        }
        let mut raw = Vec::with_capacity(self.scorers.len());
        for s in &self.scorers {
            let assembler = FeatureAssembler::new(s.kind, words, if s.kind.uses_kb() { kb } else { None })?;
            raw.push(s.predict_raw_all(triples, &assembler, warnings)?);
        }
        match (raw.len(), &self.ensemble) {
            (1, None) => Ok(raw.pop().expect("one scorer")),
            (2, Some(e)) => Ok(raw[0].iter().zip(&raw[1]).map(|(&a, &b)| e.combine(a, b)).collect()),
            _ => Err(Error::invalid(format!(
                "inconsistent pipeline: {} scorers in {} mode",
                self.scorers.len(),
                self.mode
            ))),
        }
    }

    pub fn predict(
        &self,
        triples: &[ScoredTriple],
        words: &dyn WordLookup<T>,
        kb: Option<&dyn KbFeatureSource<T>>,
        warnings: &mut Warnings,
    ) -> Result<Vec<u8>> {
        self.predict_raw(triples, words, kb, warnings)?.into_iter().map(transform_score).collect()
    }
}

pub const PIPELINE_FORMAT_VERSION: u32 = 1;

/// Reference from a pipeline manifest to one scorer's SVR container file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerEntry {
    pub features: FeatureKind,
    pub svr: String,
}

/// Paths of the feature stores a pipeline was trained against. Relative paths
/// are resolved against the manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSources {
    pub embeddings: Option<String>,
    pub external_embeddings: Option<String>,
    pub external_format: Option<String>,
    pub kb: Option<String>,
    pub pca: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub format_version: u32,
    pub relation: Relation,
    pub mode: PipelineMode,
    pub scorers: Vec<ScorerEntry>,
    pub ensemble: Option<EnsembleModel>,
    pub sources: PipelineSources,
    #[serde(default)]
    pub config_hash: String,
}

impl PipelineManifest {
    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != PIPELINE_FORMAT_VERSION {
            return Err(Error::FormatVersion { what: "pipeline", found, expected: PIPELINE_FORMAT_VERSION });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl<T: Scalar> Pipeline<T> {
    /// Writes `svr_<features>.json` files and `pipeline.json` into `dir`.
    pub fn save(&self, dir: &Path, sources: PipelineSources, config_hash: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let mut scorers = Vec::new();
        for s in &self.scorers {
            let name = format!("svr_{}.json", s.kind);
            fs::write(dir.join(&name), s.model.to_json()?)?;
            scorers.push(ScorerEntry { features: s.kind, svr: name });
        }
        let manifest = PipelineManifest {
            format_version: PIPELINE_FORMAT_VERSION,
            relation: self.relation,
            mode: self.mode,
            scorers,
            ensemble: self.ensemble,
            sources,
            config_hash: config_hash.to_owned(),
        };
        let path = dir.join("pipeline.json");
        fs::write(&path, manifest.to_json()?)?;
        Ok(path)
    }

    pub fn load(manifest_path: &Path) -> Result<(Self, PipelineManifest)> {
        let manifest = PipelineManifest::from_json(&fs::read_to_string(manifest_path)?)?;
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let mut scorers = Vec::new();
        for e in &manifest.scorers {
            let model = SvrModel::from_json(&fs::read_to_string(base.join(&e.svr))?)?;
            scorers.push(Scorer { kind: e.features, model });
        }
        let pipeline = Pipeline { relation: manifest.relation, mode: manifest.mode, scorers, ensemble: manifest.ensemble };
        Ok((pipeline, manifest))
    }
}
