//! Run configuration: one TOML document, any key overridable from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use triple_scorer::corpus::Relation;
use triple_scorer::embed::CbowConfig;
use triple_scorer::scorer::{FeatureKind, PipelineMode, PipelineSpec};
use triple_scorer::svr::SvrConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Sentence corpus, raw or already normalized.
    pub corpus: Option<PathBuf>,
    /// Labeled training triples.
    pub triples: Option<PathBuf>,
    /// Triples to predict or evaluate.
    pub test_triples: Option<PathBuf>,
    /// Entity<TAB>predicate TSV.
    pub kb: Option<PathBuf>,
    pub external_embeddings: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Embedding initialization and sampling.
    pub global: u64,
    /// Trained-ensemble split.
    pub split: u64,
    /// CV folds and random-guess baseline.
    pub shuffle: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { global: 1, split: 2, shuffle: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSettings {
    pub k: usize,
    pub batch: usize,
}

impl Default for PcaSettings {
    fn default() -> Self {
        Self { k: 100, batch: 1000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrSettings {
    pub wordvector: SvrConfig,
    pub freebase: SvrConfig,
    pub joint: SvrConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub mode: PipelineMode,
    pub single_features: FeatureKind,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self { mode: PipelineMode::Single, single_features: FeatureKind::WordVector }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub k: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub relation: Relation,
    /// Worker threads for embedding training; 1 is deterministic.
    pub threads: usize,
    /// `word2vec` or `glove`.
    pub external_format: String,
    pub paths: Paths,
    pub seeds: Seeds,
    pub cbow: CbowConfig,
    pub pca: PcaSettings,
    pub svr: SvrSettings,
    pub pipeline: PipelineSettings,
    pub cv: CvSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            relation: Relation::Profession,
            threads: 1,
            external_format: "glove".into(),
            paths: Paths { output_dir: PathBuf::from("out"), ..Paths::default() },
            seeds: Seeds::default(),
            cbow: CbowConfig::default(),
            pca: PcaSettings::default(),
            svr: SvrSettings::default(),
            pipeline: PipelineSettings::default(),
            cv: CvSettings::default(),
        }
    }
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back to a string.
fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_owned())),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).with_context(|| format!("empty override key `{key}`"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_owned()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override `{key}`: `{p}` is not a table"),
        };
    }
    cur.insert(last.to_owned(), value);
    Ok(())
}

impl RunConfig {
    /// Loads `path` (if any), then applies `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>().with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        Self::from_table(table, overrides)
    }

    /// Applies overrides on top of an existing configuration.
    pub fn from_base(base: &RunConfig, overrides: &[String]) -> Result<Self> {
        Self::from_table(toml::Table::try_from(base)?, overrides)
    }

    fn from_table(mut table: toml::Table, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            let (k, v) = o.split_once('=').with_context(|| format!("override `{o}` is not key=value"))?;
            set_dotted(&mut table, k.trim(), parse_override_value(v.trim()))?;
        }
        let config: RunConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            bail!("threads must be at least 1");
        }
        self.effective_cbow().validate()?;
        for s in [&self.svr.wordvector, &self.svr.freebase, &self.svr.joint] {
            s.validate()?;
        }
        if self.pca.k == 0 || self.pca.batch == 0 {
            bail!("pca.k and pca.batch must be positive");
        }
        if self.cv.k < 2 {
            bail!("cv.k must be at least 2");
        }
        let _: triple_scorer::embed::EmbeddingFormat = self.external_format.parse()?;
        Ok(())
    }

    /// CBOW settings with the global seed and thread count applied.
    pub fn effective_cbow(&self) -> CbowConfig {
        CbowConfig { seed: self.seeds.global, threads: self.threads, ..self.cbow.clone() }
    }

    pub fn pipeline_spec(&self) -> PipelineSpec {
        PipelineSpec {
            mode: self.pipeline.mode,
            single_features: self.pipeline.single_features,
            svr_wordvector: self.svr.wordvector.clone(),
            svr_freebase: self.svr.freebase.clone(),
            svr_joint: self.svr.joint.clone(),
            split_seed: self.seeds.split,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.paths.output_dir.join(name)
    }
}
