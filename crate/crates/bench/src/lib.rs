//! Synthetic corpora for the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use corpusforge::{Sentence, SentencePair};

pub fn vocab(size: usize) -> Vec<String> {
    (0..size).map(|i| format!("w{i}")).collect()
}

pub fn token_lines(n: usize, seed: u64) -> Vec<Vec<String>> {
    let words = vocab(2000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..30);
            (0..len).map(|_| words[rng.gen_range(0..words.len())].clone()).collect()
        })
        .collect()
}

/// Pairs with roughly 10% exact duplicates and a few over-long lines.
pub fn parallel(n: usize, seed: u64) -> Vec<SentencePair> {
    let src = token_lines(n, seed);
    let tgt = token_lines(n, seed ^ 0x9e37);
    (0..n)
        .map(|i| {
            let j = if i % 10 == 9 { i / 2 } else { i };
            let mut s = src[j].join(" ");
            if i % 97 == 0 {
                s = [s.as_str(); 8].join(" ");
            }
            SentencePair::authentic(Sentence::new(s, "de"), Sentence::new(tgt[j].join(" "), "en"))
        })
        .collect()
}
