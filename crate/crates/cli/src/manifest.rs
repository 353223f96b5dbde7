//! Run manifests and artifact stamping.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use triple_scorer::Warnings;

use crate::config::{RunConfig, Seeds};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub warnings: BTreeMap<String, usize>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| Ok(FileDigest { path: p.display().to_string(), sha256: sha256_file(p)? }))
        .collect()
}

impl RunManifest {
    pub fn path_for(config: &RunConfig, command: &str) -> PathBuf {
        config.output("manifests").join(format!("{command}.json"))
    }

    pub fn write(
        config: &RunConfig,
        command: &str,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        warnings: &Warnings,
    ) -> Result<PathBuf> {
        let m = RunManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            command: command.to_owned(),
            tool_version: TOOL_VERSION.to_owned(),
            config_hash: config.hash()?,
            seeds: config.seeds.clone(),
            config: config.clone(),
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
            warnings: warnings.summary().into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
        };
        let path = Self::path_for(config, command);
        std::fs::create_dir_all(path.parent().expect("manifest directory"))?;
        std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
        if found != MANIFEST_FORMAT_VERSION as u64 {
            bail!("manifest {} has format version {found}, expected {MANIFEST_FORMAT_VERSION}", path.display());
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Adds a `config_hash` field to a JSON object document.
pub fn stamp_json(json: &str, config_hash: &str) -> Result<String> {
    let mut value: serde_json::Value = serde_json::from_str(json)?;
    match value.as_object_mut() {
        Some(obj) => {
            obj.insert("config_hash".into(), serde_json::Value::String(config_hash.to_owned()));
        }
        None => bail!("artifact is not a JSON object"),
    }
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}
