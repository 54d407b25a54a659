use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Provenance, SentencePair};

/// Width of a token-ratio histogram bucket.
pub const RATIO_BUCKET_WIDTH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioBin {
    /// Inclusive lower bound; `null` collects pairs with an empty target.
    pub lower: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pair_count: usize,
    pub src_tokens: usize,
    pub tgt_tokens: usize,
    pub provenance: BTreeMap<Provenance, usize>,
    pub ratio_histogram: Vec<RatioBin>,
}

/// Single-pass accumulator behind [`compute_stats`].
#[derive(Debug, Default)]
pub struct StatsBuilder {
    pair_count: usize,
    src_tokens: usize,
    tgt_tokens: usize,
    provenance: BTreeMap<Provenance, usize>,
    // bucket index (floor(ratio / width)); None for empty target
    ratios: BTreeMap<Option<u64>, usize>,
}

impl StatsBuilder {
    pub fn push(&mut self, pair: &SentencePair) {
        self.pair_count += 1;
        self.src_tokens += pair.src.len();
        self.tgt_tokens += pair.tgt.len();
        *self.provenance.entry(pair.provenance).or_default() += 1;
        let bucket = if pair.tgt.is_empty() {
            None
        } else {
            Some((pair.token_ratio() / RATIO_BUCKET_WIDTH).floor() as u64)
        };
        *self.ratios.entry(bucket).or_default() += 1;
    }

    pub fn finish(self) -> CorpusStats {
        let mut ratio_histogram: Vec<RatioBin> = self
            .ratios
            .iter()
            .filter_map(|(b, &count)| {
                b.map(|b| RatioBin {
                    lower: Some(b as f64 * RATIO_BUCKET_WIDTH),
                    count,
                })
            })
            .collect();
        if let Some(&count) = self.ratios.get(&None) {
            ratio_histogram.push(RatioBin { lower: None, count });
        }
        CorpusStats {
            pair_count: self.pair_count,
            src_tokens: self.src_tokens,
            tgt_tokens: self.tgt_tokens,
            provenance: self.provenance,
            ratio_histogram,
        }
    }
}

pub fn compute_stats<'a, I>(pairs: I) -> CorpusStats
where
    I: IntoIterator<Item = &'a SentencePair>,
{
    let mut b = StatsBuilder::default();
    for p in pairs {
        b.push(p);
    }
    b.finish()
}

impl CorpusStats {
    pub fn ratio_count(&self, lower: f64) -> usize {
        self.ratio_histogram
            .iter()
            .find(|b| b.lower == Some(lower))
            .map_or(0, |b| b.count)
    }
}
