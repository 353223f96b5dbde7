//! Word embeddings: CBOW training, text-format loading, value vectors,
//! GloVe overrides and similarity queries.

mod cbow;
mod io;

use std::collections::{HashMap, HashSet};

pub use cbow::{
    build_noise_distribution, cbow_loss, cbow_loss_and_gradients, generate_training_examples,
    train_cbow, train_cbow_vocab, CbowConfig, CbowGradients, CbowModel, NoiseDistribution,
    TrainingExample,
};
pub use io::{load_embeddings_text, read_embeddings_text, write_word2vec_text, EmbeddingFormat};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar};
use crate::warning::{Warning, Warnings};

/// Dense `V×d` embedding matrix with its token index.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// Empty table of dimension `dim`.
    pub fn new(dim: usize) -> Self {
        Self { tokens: Vec::new(), index: HashMap::new(), dim, data: Vec::new() }
    }

    /// Builds a table from tokens and a row-major matrix. Tokens must be distinct.
    pub fn from_rows(tokens: Vec<String>, dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != tokens.len() * dim {
            return Err(Error::DimensionMismatch { expected: tokens.len() * dim, actual: data.len() });
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(bad.to_string()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate token `{t}`")));
            }
        }
        Ok(Self { tokens, index, dim, data })
    }

    /// Inserts or replaces the vector of `token`.
    pub fn insert(&mut self, token: &str, vector: &[T]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: vector.len() });
        }
        match self.index.get(token) {
            Some(&i) => self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.index.insert(token.to_owned(), self.tokens.len());
                self.tokens.push(token.to_owned());
                self.data.extend_from_slice(vector);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, token: &str) -> Option<&[T]> {
        self.index_of(token).map(|i| self.row(i))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

/// Resolves value words and person tokens to vectors.
pub trait WordLookup<T> {
    fn dim(&self) -> usize;
    fn value_word(&self, word: &str) -> Option<&[T]>;
    fn person(&self, token: &str) -> Option<&[T]>;
}

impl<T: Scalar> WordLookup<T> for EmbeddingTable<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value_word(&self, word: &str) -> Option<&[T]> {
        self.get(word)
    }
    fn person(&self, token: &str) -> Option<&[T]> {
        self.get(token)
    }
}

/// Corpus-trained table whose value words may be overridden by external vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridLookup<T> {
    pub person_table: EmbeddingTable<T>,
    pub value_overrides: HashMap<String, Vec<T>>,
}

impl<T: Scalar> HybridLookup<T> {
    pub fn from_base(base: EmbeddingTable<T>) -> Self {
        Self { person_table: base, value_overrides: HashMap::new() }
    }
}

impl<T: Scalar> WordLookup<T> for HybridLookup<T> {
    fn dim(&self) -> usize {
        self.person_table.dim()
    }
    fn value_word(&self, word: &str) -> Option<&[T]> {
        self.value_overrides
            .get(word)
            .map(Vec::as_slice)
            .or_else(|| self.person_table.get(word))
    }
    fn person(&self, token: &str) -> Option<&[T]> {
        self.person_table.get(token)
    }
}

/// Lowercased whitespace-separated words of a value string.
pub fn value_words(value: &str) -> impl Iterator<Item = String> + '_ {
    value.split_whitespace().map(str::to_lowercase)
}

/// Mean of the vectors of the value's words. Unknown words are skipped; if
/// none is known the zero vector is returned and a warning recorded.
pub fn value_vector<T: Scalar, L: WordLookup<T> + ?Sized>(
    value: &str,
    lookup: &L,
    warnings: &mut Warnings,
) -> Vec<T> {
    let mut acc = vec![T::zero(); lookup.dim()];
    let mut found = 0usize;
    for w in value_words(value) {
        if let Some(v) = lookup.value_word(&w) {
            for (a, &x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            found += 1;
        }
    }
    match found {
        0 => warnings.push(Warning::ValueOutOfVocabulary(value.to_owned())),
        1 => {}
        n => {
            let n = T::from_usize_lossy(n);
            acc.iter_mut().for_each(|a| *a /= n);
        }
    }
    acc
}

/// Overrides the vectors of `value_words` with those of `external` where present.
pub fn override_value_vectors<T: Scalar, S: AsRef<str>>(
    base: EmbeddingTable<T>,
    external: &EmbeddingTable<T>,
    value_words: impl IntoIterator<Item = S>,
) -> Result<HybridLookup<T>> {
    if external.dim() != base.dim() {
        return Err(Error::DimensionMismatch { expected: base.dim(), actual: external.dim() });
    }
    let mut value_overrides = HashMap::new();
    let mut seen = HashSet::new();
    for w in value_words {
        let w = w.as_ref();
        if seen.insert(w.to_owned()) {
            if let Some(v) = external.get(w) {
                value_overrides.insert(w.to_owned(), v.to_vec());
            }
        }
    }
    Ok(HybridLookup { person_table: base, value_overrides })
}

/// `u·v / (‖u‖‖v‖)`, or 0 when either vector is zero.
pub fn cosine_similarity<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), actual: v.len() });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == T::zero() || nv == T::zero() {
        return Ok(T::zero());
    }
    Ok((dot(u, v) / (nu * nv)).max(-T::one()).min(T::one()))
}

/// Top-`k` tokens by cosine similarity to `query`, excluding the query itself.
/// Ties are broken lexicographically.
pub fn most_similar<T: Scalar>(table: &EmbeddingTable<T>, query: &str, k: usize) -> Result<Vec<(String, T)>> {
    let qi = table.index_of(query).ok_or_else(|| Error::UnknownToken(query.to_owned()))?;
    let q = table.row(qi);
    let mut scored: Vec<(&str, T)> = Vec::with_capacity(table.len());
    for i in (0..table.len()).filter(|&i| i != qi) {
        scored.push((&table.tokens[i], cosine_similarity(q, table.row(i))?));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    Ok(scored.into_iter().take(k).map(|(t, s)| (t.to_owned(), s)).collect())
}
