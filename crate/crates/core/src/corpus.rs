//! Corpus normalization, vocabulary construction, triple files and dataset statistics.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tokens longer than this (in characters) are truncated.
pub const MAX_TOKEN_CHARS: usize = 256;

/// Highest relevance score.
pub const MAX_SCORE: u8 = 7;

/// ASCII punctuation removed during normalization. Underscore and hyphen are kept.
pub fn is_stripped_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() && c != '_' && c != '-'
}

/// Replaces every well-formed `[Entity|mention]` span by its entity part with
/// spaces turned into underscores. Malformed spans are left untouched; their
/// brackets are stripped later as punctuation.
fn replace_spans(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match parse_span(after) {
            Some((entity, consumed)) => {
                // Keep the entity apart from neighbouring text.
                out.push(' ');
                out.extend(entity.chars().map(|c| if c == ' ' { '_' } else { c }));
                out.push(' ');
                rest = &after[consumed..];
            }
            None => {
                out.push('[');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Parses `entity|mention]` and returns the entity and the number of bytes consumed.
fn parse_span(s: &str) -> Option<(&str, usize)> {
    let bar = s.find(['|', ']'])?;
    if s.as_bytes()[bar] != b'|' || bar == 0 {
        return None;
    }
    let close = s[bar + 1..].find(['[', ']'])? + bar + 1;
    if s.as_bytes()[close] != b']' {
        return None;
    }
    Some((&s[..bar], close + 1))
}

/// Normalizes one corpus line into lowercase tokens.
///
/// Entity spans are replaced by the entity, text is lowercased, ASCII
/// punctuation other than `_` and `-` is dropped and the result is split on
/// whitespace. Never fails.
pub fn normalize_sentence(raw: &str) -> Vec<String> {
    let replaced = replace_spans(raw);
    let cleaned: String = replaced
        .chars()
        .filter(|&c| !is_stripped_punctuation(c))
        .flat_map(char::to_lowercase)
        .collect();
    cleaned
        .split_whitespace()
        .map(|tok| {
            if tok.chars().count() > MAX_TOKEN_CHARS {
                tok.chars().take(MAX_TOKEN_CHARS).collect()
            } else {
                tok.to_owned()
            }
        })
        .collect()
}

/// Normalizes a person name to the corpus entity convention (`walter_damrosch`).
pub fn normalize_entity(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
        .to_lowercase()
}

/// Raw token counts, mergeable across shards.
#[derive(Debug, Default, Clone)]
pub struct TokenCounts {
    counts: HashMap<String, u64>,
}

impl TokenCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_sentence<S: AsRef<str>>(&mut self, tokens: &[S]) {
        for t in tokens {
            *self.counts.entry(t.as_ref().to_owned()).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: TokenCounts) {
        for (tok, c) in other.counts {
            *self.counts.entry(tok).or_insert(0) += c;
        }
    }

    pub fn into_vocabulary(self, min_count: u64) -> Vocabulary {
        let mut kept: Vec<(String, u64)> = self
            .counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Vocabulary::from_sorted(kept)
    }
}

/// Token vocabulary with dense indices in descending-count order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    counts: Vec<u64>,
    total_tokens: u64,
}

impl Vocabulary {
    fn from_sorted(entries: Vec<(String, u64)>) -> Self {
        let mut v = Vocabulary::default();
        for (tok, c) in entries {
            v.index.insert(tok.clone(), v.tokens.len());
            v.tokens.push(tok);
            v.counts.push(c);
            v.total_tokens += c;
        }
        v
    }

    /// Builds a vocabulary from explicit `(token, count)` pairs, re-sorted into
    /// canonical order. Duplicate tokens have their counts summed.
    pub fn from_counts<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut counts = TokenCounts::new();
        for (tok, c) in entries {
            *counts.counts.entry(tok.into()).or_insert(0) += c;
        }
        counts.into_vocabulary(0)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Maps a sentence to vocabulary indices, dropping out-of-vocabulary tokens.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.index_of(t.as_ref())).collect()
    }

    /// Writes `token<TAB>count` lines in index order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (tok, c) in self.tokens.iter().zip(&self.counts) {
            writeln!(out, "{tok}\t{c}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (tok, count) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `token<TAB>count`".into(),
            })?;
            let count = count.parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad count `{count}`"),
            })?;
            entries.push((tok.to_owned(), count));
        }
        Ok(Self::from_counts(entries))
    }
}

/// Counts tokens over a stream of sentences and keeps those seen at least
/// `min_count` times.
pub fn build_vocabulary<I, S>(corpus: I, min_count: u64) -> Result<Vocabulary>
where
    I: IntoIterator,
    I::Item: AsRef<[S]>,
    S: AsRef<str>,
{
    if min_count == 0 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let mut counts = TokenCounts::new();
    for sentence in corpus {
        counts.add_sentence(sentence.as_ref());
    }
    Ok(counts.into_vocabulary(min_count))
}

/// Same as [`build_vocabulary`], counting `shards` contiguous slices in parallel.
/// The result does not depend on the shard count.
pub fn build_vocabulary_sharded(
    sentences: &[Vec<String>],
    min_count: u64,
    shards: usize,
) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let shards = shards.max(1);
    let chunk = sentences.len().div_ceil(shards).max(1);
    let partials: Vec<TokenCounts> = std::thread::scope(|scope| {
        let handles: Vec<_> = sentences
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    let mut c = TokenCounts::new();
                    for s in part {
                        c.add_sentence(s);
                    }
                    c
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("counting thread panicked"))
            .collect()
    });
    let mut merged = TokenCounts::new();
    for p in partials {
        merged.merge(p);
    }
    Ok(merged.into_vocabulary(min_count))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Profession,
    Nationality,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Profession => "profession",
            Relation::Nationality => "nationality",
        })
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "profession" => Ok(Relation::Profession),
            "nationality" => Ok(Relation::Nationality),
            other => Err(Error::invalid(format!("unknown relation `{other}`"))),
        }
    }
}

/// A (person, relation, value) triple with an optional relevance score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredTriple {
    /// Person name as given; see [`ScoredTriple::person_token`].
    pub person: String,
    pub relation: Relation,
    pub value: String,
    pub score: Option<u8>,
}

impl ScoredTriple {
    pub fn new(person: &str, relation: Relation, value: &str, score: Option<u8>) -> Self {
        Self {
            person: person.trim().to_owned(),
            relation,
            value: value.trim().to_owned(),
            score,
        }
    }

    pub fn labeled(person: &str, relation: Relation, value: &str, score: u8) -> Self {
        Self::new(person, relation, value, Some(score))
    }

    /// The person in the corpus entity convention.
    pub fn person_token(&self) -> String {
        normalize_entity(&self.person)
    }
}

/// Reads a triples TSV: `person<TAB>value<TAB>score` or `person<TAB>value`.
/// Blank lines are skipped.
pub fn read_triples<R: BufRead>(input: R, relation: Relation) -> Result<Vec<ScoredTriple>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |message: String| Error::Parse { line: i + 1, message };
        let score = match fields.len() {
            2 => None,
            3 => {
                let s: u8 = fields[2]
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("bad score `{}`", fields[2])))?;
                if s > MAX_SCORE {
                    return Err(err(format!("score {s} outside 0..=7")));
                }
                Some(s)
            }
            n => return Err(err(format!("expected 2 or 3 tab-separated columns, found {n}"))),
        };
        if fields[0].trim().is_empty() || fields[1].trim().is_empty() {
            return Err(err("empty person or value".into()));
        }
        out.push(ScoredTriple::new(fields[0], relation, fields[1], score));
    }
    Ok(out)
}

/// Writes `person<TAB>value<TAB>score` lines.
pub fn write_scored<W: Write>(mut out: W, triples: &[ScoredTriple], scores: &[u8]) -> Result<()> {
    for (t, s) in triples.iter().zip(scores) {
        writeln!(out, "{}\t{}\t{}", t.person, t.value, s)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_triples: usize,
    pub n_unique_persons: usize,
    pub n_unique_values: usize,
    pub score_histogram: [usize; 8],
}

/// Counts triples, distinct persons, distinct values and the score histogram.
/// All triples must share one relation.
pub fn dataset_stats(triples: &[ScoredTriple]) -> Result<DatasetStats> {
    if let Some(first) = triples.first() {
        if let Some(other) = triples.iter().find(|t| t.relation != first.relation) {
            return Err(Error::MixedRelations(
                first.relation.to_string(),
                other.relation.to_string(),
            ));
        }
    }
    let persons: BTreeSet<&str> = triples.iter().map(|t| t.person.as_str()).collect();
    let values: BTreeSet<&str> = triples.iter().map(|t| t.value.as_str()).collect();
    let mut hist = [0usize; 8];
    for t in triples {
        if let Some(s) = t.score {
            hist[s as usize] += 1;
        }
    }
    Ok(DatasetStats {
        n_triples: triples.len(),
        n_unique_persons: persons.len(),
        n_unique_values: values.len(),
        score_histogram: hist,
    })
}
