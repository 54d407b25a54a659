use std::collections::HashSet;

use super::text::normalize_width;
use crate::corpus::{nfc, Sentence, SentencePair};
use crate::seed::key128;

const KEY_SEPARATOR: char = '\u{1F}';

pub fn dedup_key_text(pair: &SentencePair) -> String {
    let mut key = nfc(&normalize_width(pair.src.text()));
    key.push(KEY_SEPARATOR);
    key.push_str(&nfc(&normalize_width(pair.tgt.text())));
    key
}

/// 128-bit digest of [`dedup_key_text`]. Sharded runs must route pairs by
/// this key so duplicates meet in the same shard.
pub fn dedup_key(pair: &SentencePair) -> u128 {
    key128(dedup_key_text(pair).as_bytes())
}

pub fn sentence_key(s: &Sentence) -> u128 {
    key128(nfc(&normalize_width(s.text())).as_bytes())
}

/// Remembers keys seen so far; stores digests only.
#[derive(Debug, Default)]
pub struct Deduper {
    seen: HashSet<u128>,
}

impl Deduper {
    pub fn new() -> Self {
        Self::default()
    }

    /// True the first time a pair's key is seen.
    pub fn first_pair(&mut self, pair: &SentencePair) -> bool {
        self.seen.insert(dedup_key(pair))
    }

    pub fn first_sentence(&mut self, s: &Sentence) -> bool {
        self.seen.insert(sentence_key(s))
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// Stable dedup: the first occurrence of each key is kept.
pub fn dedup<I>(pairs: I) -> impl Iterator<Item = SentencePair>
where
    I: IntoIterator<Item = SentencePair>,
{
    let mut d = Deduper::new();
    pairs.into_iter().filter(move |p| d.first_pair(p))
}

pub fn dedup_sentences<I>(sentences: I) -> impl Iterator<Item = Sentence>
where
    I: IntoIterator<Item = Sentence>,
{
    let mut d = Deduper::new();
    sentences.into_iter().filter(move |s| d.first_sentence(s))
}
