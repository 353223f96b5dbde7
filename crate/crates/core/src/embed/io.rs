//! Text embedding formats.
//!
//! `Word2vecText`: a `V d` header line followed by `token v1 … vd` lines.
//! `GloveText`: the same rows without a header; `d` comes from the first row.
//!
//! Values are written with 6 significant digits, so a save/load round trip
//! preserves each value to a relative error of at most `5e-6`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::warning::{Warning, Warnings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingFormat {
    Word2vecText,
    GloveText,
}

impl FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word2vec" | "word2vec_text" => Ok(EmbeddingFormat::Word2vecText),
            "glove" | "glove_text" => Ok(EmbeddingFormat::GloveText),
            other => Err(Error::invalid(format!("unknown embedding format `{other}`"))),
        }
    }
}

pub fn load_embeddings_text<T: Scalar>(
    path: impl AsRef<Path>,
    format: EmbeddingFormat,
    keep: Option<&HashSet<String>>,
    warnings: &mut Warnings,
) -> Result<EmbeddingTable<T>> {
    let file = File::open(path)?;
    read_embeddings_text(BufReader::new(file), format, keep, warnings)
}

/// Parses an embedding file. When `keep` is given, only those tokens are
/// retained (rows are still validated).
pub fn read_embeddings_text<T: Scalar, R: BufRead>(
    input: R,
    format: EmbeddingFormat,
    keep: Option<&HashSet<String>>,
    warnings: &mut Warnings,
) -> Result<EmbeddingTable<T>> {
    let mut lines = input.lines().enumerate();
    let mut dim: Option<usize> = None;
    let mut expected_rows: Option<usize> = None;

    if format == EmbeddingFormat::Word2vecText {
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
        let header = header?;
        let mut parts = header.split_whitespace();
        let parse = |p: Option<&str>| -> Result<usize> {
            p.and_then(|s| s.parse().ok())
                .ok_or(Error::Parse { line: 1, message: format!("bad header `{header}`") })
        };
        expected_rows = Some(parse(parts.next())?);
        dim = Some(parse(parts.next())?);
    }

    let mut table: Option<EmbeddingTable<T>> = dim.map(EmbeddingTable::new);
    let mut rows = 0usize;
    let mut buf: Vec<T> = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ').filter(|s| !s.is_empty());
        let token = parts.next().expect("non-empty line has a token");
        buf.clear();
        for p in parts {
            let v: T = p
                .parse()
                .map_err(|_| Error::Parse { line: line_no, message: format!("bad number `{p}`") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line: line_no, message: format!("non-finite value `{p}`") });
            }
            buf.push(v);
        }
        let d = *dim.get_or_insert(buf.len());
        if buf.len() != d || d == 0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {d} values, found {}", buf.len()),
            });
        }
        rows += 1;
        let t = table.get_or_insert_with(|| EmbeddingTable::new(d));
        if keep.is_some_and(|k| !k.contains(token)) {
            continue;
        }
        if t.index_of(token).is_some() {
            log::warn!("token `{token}` repeated at line {line_no}");
            warnings.push(Warning::DuplicateToken { token: token.to_owned(), line: line_no });
        }
        t.insert(token, &buf)?;
    }
    if let Some(n) = expected_rows {
        if n != rows {
            return Err(Error::Parse {
                line: rows + 1,
                message: format!("header announces {n} rows, found {rows}"),
            });
        }
    }
    table.ok_or(Error::EmptyVocabulary)
}

/// Formats a value with 6 significant digits, in the shortest form that parses back to it.
fn format_value<T: Scalar>(v: T) -> String {
    let rounded: f64 = format!("{:.5e}", v.to_f64_lossless()).parse().expect("valid float");
    if rounded == 0.0 {
        "0".to_owned()
    } else {
        format!("{rounded}")
    }
}

pub fn write_word2vec_text<T: Scalar, W: Write>(table: &EmbeddingTable<T>, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", table.len(), table.dim())?;
    for (i, tok) in table.tokens().iter().enumerate() {
        out.write_all(tok.as_bytes())?;
        for &v in table.row(i) {
            write!(out, " {}", format_value(v))?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}
