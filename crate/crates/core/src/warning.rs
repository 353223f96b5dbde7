use std::collections::BTreeMap;
use std::fmt;

/// Non-fatal condition recorded during feature assembly, training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// No word of a value string was found in the lookup.
    ValueOutOfVocabulary(String),
    /// A person token has no corpus-trained vector.
    PersonOutOfVocabulary(String),
    /// A person has no row in the knowledge-base matrix.
    PersonMissingFromKb(String),
    /// SMO stopped at its iteration cap before reaching the KKT tolerance.
    SmoIterationCap { iterations: usize, gap: f64 },
    /// The embedding file repeated a token; the last row was kept.
    DuplicateToken { token: String, line: usize },
    /// Kendall tau had no group with a comparable pair.
    NoTauGroups,
}

impl Warning {
    fn kind(&self) -> &'static str {
        match self {
            Warning::ValueOutOfVocabulary(_) => "value out of vocabulary",
            Warning::PersonOutOfVocabulary(_) => "person out of vocabulary",
            Warning::PersonMissingFromKb(_) => "person missing from KB",
            Warning::SmoIterationCap { .. } => "SMO iteration cap",
            Warning::DuplicateToken { .. } => "duplicate embedding token",
            Warning::NoTauGroups => "no Kendall tau groups",
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::ValueOutOfVocabulary(v) => write!(f, "no word of value `{v}` has a vector"),
            Warning::PersonOutOfVocabulary(p) => write!(f, "person `{p}` has no word vector"),
            Warning::PersonMissingFromKb(p) => write!(f, "person `{p}` has no KB row"),
            Warning::SmoIterationCap { iterations, gap } => {
                write!(f, "SMO hit the cap after {iterations} iterations (gap {gap:.3e})")
            }
            Warning::DuplicateToken { token, line } => {
                write!(f, "token `{token}` repeated at line {line}; last occurrence kept")
            }
            Warning::NoTauGroups => write!(f, "no group has two comparable triples"),
        }
    }
}

/// Accumulator for [`Warning`]s.
#[derive(Debug, Default, Clone)]
pub struct Warnings {
    items: Vec<Warning>,
}

impl Warnings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, warning: Warning) {
        log::debug!("{warning}");
        self.items.push(warning);
    }

    pub fn extend(&mut self, other: Warnings) {
        self.items.extend(other.items);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Warning> {
        self.items.iter()
    }

    /// Counts per warning kind, in a stable order.
    pub fn summary(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for w in &self.items {
            *out.entry(w.kind()).or_insert(0) += 1;
        }
        out
    }
}
