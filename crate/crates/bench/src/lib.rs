//! Synthetic inputs shared by the benchmarks.

use kwdrift::{CooccurrenceTable, VectorSpace, Weighting};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `docs` documents of `len` token ids drawn from a Zipf-like law over `vocab` ids.
pub fn zipf_corpus(docs: usize, len: usize, vocab: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h: f64 = (1..=vocab).map(|r| 1.0 / r as f64).sum();
    let cdf: Vec<f64> = (1..=vocab)
        .scan(0.0, |acc, r| {
            *acc += 1.0 / (r as f64 * h);
            Some(*acc)
        })
        .collect();
    (0..docs)
        .map(|_| {
            (0..len)
                .map(|_| {
                    let u: f64 = rng.random();
                    cdf.partition_point(|&c| c < u).min(vocab - 1) as u32
                })
                .collect()
        })
        .collect()
}

pub fn table(docs: usize, vocab: usize, window: usize) -> CooccurrenceTable {
    CooccurrenceTable::build(&zipf_corpus(docs, 20, vocab, 7), vocab, window, Weighting::InverseDistance)
        .expect("valid corpus")
}

pub fn random_space(n: usize, dim: usize, seed: u64) -> VectorSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let tokens = (0..n).map(|i| format!("w{i}")).collect();
    VectorSpace::new(tokens, data, dim, "bench").expect("valid space")
}
