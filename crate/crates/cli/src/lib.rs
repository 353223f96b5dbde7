//! Command-line workflow for the triple scorer: corpus preprocessing,
//! embedding training, KB feature reduction, pipeline training, prediction,
//! evaluation and cross-validation.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "triple-scorer", version, about = "Relevance scores for profession/nationality triples")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Take the configuration from an earlier run manifest.
    #[arg(long, global = true, conflicts_with = "config")]
    pub from_manifest: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set cbow.dim=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads (1 is deterministic).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// `profession` or `nationality`.
    #[arg(long, global = true)]
    pub relation: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Triple, person, value counts and the score histogram.
    Stats { triples: Option<PathBuf> },
    /// Normalize a sentence corpus line by line.
    Preprocess { input: PathBuf, output: PathBuf },
    /// Train CBOW word vectors on the corpus.
    TrainEmbeddings,
    /// Fit incremental PCA on the KB predicate matrix.
    BuildKb,
    /// Fit the scoring pipeline on the training triples.
    Train,
    /// Score triples with a trained pipeline.
    Predict {
        test: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score labeled triples and report metrics next to the baselines.
    Evaluate { test: Option<PathBuf> },
    /// k-fold cross-validation of the pipeline and baselines.
    Cv,
    /// Nearest neighbours of a token in the trained embeddings.
    Similar {
        word: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
}

impl Cli {
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut overrides = Vec::new();
        let base = match &self.from_manifest {
            Some(p) => Some(RunManifest::read(p)?.config),
            None => None,
        };
        if let Some(t) = self.threads {
            overrides.push(format!("threads={t}"));
        }
        if let Some(d) = &self.output_dir {
            overrides.push(format!("paths.output_dir={}", toml_string(&d.display().to_string())));
        }
        if let Some(r) = &self.relation {
            overrides.push(format!("relation={}", toml_string(r)));
        }
        overrides.extend(self.overrides.iter().cloned());
        match base {
            Some(c) => RunConfig::from_base(&c, &overrides),
            None => RunConfig::load(self.config.as_deref(), &overrides),
        }
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_owned()).to_string()
}

pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let config = cli.resolve_config().context("resolving configuration")?;
    use commands::*;
    match &cli.command {
        Command::Stats { triples } => cmd_stats(&config, triples.as_deref()).map(drop),
        Command::Preprocess { input, output } => cmd_preprocess(&config, input, output).map(drop),
        Command::TrainEmbeddings => cmd_train_embeddings(&config).map(drop),
        Command::BuildKb => cmd_build_kb(&config).map(drop),
        Command::Train => cmd_train(&config).map(drop),
        Command::Predict { test, output } => cmd_predict(&config, test.as_deref(), output.as_deref()).map(drop),
        Command::Evaluate { test } => cmd_evaluate(&config, test.as_deref()).map(drop),
        Command::Cv => cmd_cv(&config).map(drop),
        Command::Similar { word, k, embeddings } => cmd_similar(&config, embeddings.as_deref(), word, *k).map(drop),
    }
}
