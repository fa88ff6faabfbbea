//! Fixtures shared by the benchmarks.

use ccgan_core::{Document, Matrix};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// `n` documents of `len` words drawn from a `vocab`-word lexicon.
pub fn random_corpus(n: usize, len: usize, vocab: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let words: Vec<String> = (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))).collect();
            Document::new(words.join(" "))
        })
        .collect()
}
