//! Two-cluster synthetic corpus: every sentence draws its words from one of
//! two disjoint vocabularies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triple_scorer::embed::{cosine_similarity, EmbeddingTable};

pub const CLUSTER_SIZE: usize = 10;

pub fn word(cluster: usize, i: usize) -> String {
    format!("{}{i}", if cluster == 0 { "alpha" } else { "beta" })
}

pub fn corpus(seed: u64, n_sentences: usize, len: usize) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_sentences)
        .map(|_| {
            let c = rng.gen_range(0..2);
            (0..len).map(|_| word(c, rng.gen_range(0..CLUSTER_SIZE))).collect()
        })
        .collect()
}

/// (mean within-cluster cosine, mean cross-cluster cosine).
pub fn cluster_cosines(table: &EmbeddingTable<f64>) -> (f64, f64) {
    let (mut within, mut nw, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
    let words: Vec<(usize, String)> =
        (0..2).flat_map(|c| (0..CLUSTER_SIZE).map(move |i| (c, word(c, i)))).collect();
    for (a, (ca, wa)) in words.iter().enumerate() {
        for (cb, wb) in &words[a + 1..] {
            let cos = cosine_similarity(table.get(wa).unwrap(), table.get(wb).unwrap()).unwrap();
            if ca == cb {
                within += cos;
                nw += 1;
            } else {
                cross += cos;
                nc += 1;
            }
        }
    }
    (within / nw as f64, cross / nc as f64)
}
