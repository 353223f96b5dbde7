//! Synthetic benchmark with a planted rule: person `i` belongs to latent group
//! `i % 3`; a triple scores 7 when the value belongs to the person's group and
//! 0 or 1 otherwise. Corpus sentences tie each person and each value to its
//! group's topic words; KB predicates are group-specific with some noise.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triple_scorer::corpus::{Relation, ScoredTriple};

pub const VALUES: [&str; 3] = ["violinist", "gardener", "surgeon"];
const TOPIC_WORDS: usize = 8;

pub struct Synthetic {
    /// Raw corpus lines with `[Entity|mention]` spans.
    pub corpus: Vec<String>,
    pub triples: Vec<ScoredTriple>,
    /// (entity, predicate) rows.
    pub kb: Vec<(String, String)>,
}

pub fn person_name(i: usize) -> String {
    format!("Person {i}")
}

pub fn group_of(i: usize) -> usize {
    i % 3
}

pub fn planted_score(person: usize, value: usize) -> u8 {
    if group_of(person) == value {
        7
    } else {
        (person % 2) as u8
    }
}

fn topic(group: usize, rng: &mut ChaCha8Rng) -> String {
    format!("topic{group}w{}", rng.gen_range(0..TOPIC_WORDS))
}

pub fn generate(n_persons: usize, sentences_per_entity: usize, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::new();
    for i in 0..n_persons {
        let g = group_of(i);
        for _ in 0..sentences_per_entity {
            let mut words: Vec<String> = (0..5).map(|_| topic(g, &mut rng)).collect();
            let at = rng.gen_range(0..=words.len());
            let mention = ["He", "She", "The person"][rng.gen_range(0..3)];
            words.insert(at, format!("[{}|{mention}]", person_name(i)));
            corpus.push(format!("{}.", words.join(" ")));
        }
    }
    for (g, v) in VALUES.iter().enumerate() {
        for _ in 0..sentences_per_entity {
            let mut words: Vec<String> = (0..5).map(|_| topic(g, &mut rng)).collect();
            let at = rng.gen_range(0..=words.len());
            words.insert(at, format!("The {v}"));
            corpus.push(format!("{}!", words.join(", ")));
        }
    }
    corpus.shuffle(&mut rng);

    let triples = (0..n_persons)
        .flat_map(|i| (0..VALUES.len()).map(move |v| (i, v)))
        .map(|(i, v)| ScoredTriple::labeled(&person_name(i), Relation::Profession, VALUES[v], planted_score(i, v)))
        .collect();

    let mut kb = Vec::new();
    for i in 0..n_persons {
        let g = group_of(i);
        for p in 0..6 {
            if rng.gen_bool(0.8) {
                kb.push((person_name(i), format!("/group{g}/pred{p}")));
            }
        }
        kb.push((person_name(i), format!("/common/pred{}", rng.gen_range(0..4))));
    }
    Synthetic { corpus, triples, kb }
}

impl Synthetic {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(dir.join("corpus.txt"))?;
        for l in &self.corpus {
            writeln!(f, "{l}")?;
        }
        let mut f = std::fs::File::create(dir.join("triples.tsv"))?;
        for t in &self.triples {
            writeln!(f, "{}\t{}\t{}", t.person, t.value, t.score.unwrap())?;
        }
        let mut f = std::fs::File::create(dir.join("kb.tsv"))?;
        for (e, p) in &self.kb {
            writeln!(f, "{e}\t{p}")?;
        }
        Ok(())
    }
}
