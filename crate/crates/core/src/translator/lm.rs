use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const UNK: &str = "<unk>";
const PROB_FLOOR: f64 = 1e-12;

/// Add-k smoothed n-gram language model.
///
/// The vocabulary is every training token plus `<unk>`; contexts are padded
/// with `<s>`. Unseen contexts fall back to the uniform distribution, which
/// is also what add-k yields for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramLm {
    order: usize,
    k: f64,
    vocab: BTreeSet<String>,
    // context joined by ' ' -> (word -> count); totals kept alongside
    counts: BTreeMap<String, BTreeMap<String, u64>>,
    totals: BTreeMap<String, u64>,
}

impl NgramLm {
    pub fn train<C, S>(corpus: &[C], order: usize, k: f64) -> Result<Self>
    where
        C: AsRef<[S]>,
        S: AsRef<str>,
    {
        if order == 0 {
            return Err(Error::config("LM order must be >= 1"));
        }
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::config(format!("LM smoothing k must be >= 0, got {k}")));
        }
        let mut vocab = BTreeSet::new();
        let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        let mut totals: BTreeMap<String, u64> = BTreeMap::new();
        for sent in corpus {
            let toks: Vec<&str> = sent.as_ref().iter().map(|t| t.as_ref()).collect();
            let padded = pad(&toks, order);
            for (i, w) in toks.iter().enumerate() {
                vocab.insert(w.to_string());
                let ctx = padded[i..i + order - 1].join(" ");
                *counts.entry(ctx.clone()).or_default().entry(w.to_string()).or_default() += 1;
                *totals.entry(ctx).or_default() += 1;
            }
        }
        if vocab.is_empty() {
            return Err(Error::config("cannot train an LM on an empty corpus"));
        }
        vocab.insert(UNK.to_string());
        Ok(NgramLm {
            order,
            k,
            vocab,
            counts,
            totals,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Vocabulary size including `<unk>`.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().map(String::as_str)
    }

    pub fn contexts(&self) -> impl Iterator<Item = Vec<&str>> {
        self.totals.keys().map(|c| {
            if c.is_empty() {
                Vec::new()
            } else {
                c.split(' ').collect()
            }
        })
    }

    fn map<'a>(&self, tok: &'a str) -> &'a str {
        if tok == BOS || self.vocab.contains(tok) {
            tok
        } else {
            UNK
        }
    }

    /// `P(word | context)`; `context` holds the previous `order - 1` tokens.
    pub fn prob(&self, context: &[&str], word: &str) -> f64 {
        debug_assert_eq!(context.len(), self.order - 1);
        let ctx: Vec<&str> = context.iter().map(|t| self.map(t)).collect();
        let ctx = ctx.join(" ");
        let word = self.map(word);
        let v = self.vocab.len() as f64;
        let total = self.totals.get(&ctx).copied().unwrap_or(0);
        if total == 0 {
            return 1.0 / v;
        }
        let c = self.counts[&ctx].get(word).copied().unwrap_or(0) as f64;
        let p = (c + self.k) / (total as f64 + self.k * v);
        if p > 0.0 {
            p
        } else {
            PROB_FLOOR
        }
    }

    /// Per-token conditional log-probabilities of a sentence.
    pub fn token_logprobs<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let toks: Vec<&str> = tokens.iter().map(|t| t.as_ref()).collect();
        let padded = pad(&toks, self.order);
        toks.iter()
            .enumerate()
            .map(|(i, w)| self.prob(&padded[i..i + self.order - 1], w).ln())
            .collect()
    }

    pub fn logprob<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        self.token_logprobs(tokens).iter().sum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let js = serde_json::to_vec(self).map_err(|e| Error::format("lm", e.to_string()))?;
        std::fs::write(path, js).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }
}

fn pad<'a>(toks: &[&'a str], order: usize) -> Vec<&'a str> {
    let mut v = vec![BOS; order - 1];
    v.extend_from_slice(toks);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unigram_closed_form() {
        let k = 0.5;
        let lm = NgramLm::train(&[vec!["a", "a", "b"]], 1, k).unwrap();
        // vocab {a, b, <unk>}
        let expect = ((2.0 + k) / (3.0 + 3.0 * k)).ln();
        assert!((lm.logprob(&["a"]) - expect).abs() < 1e-15);
    }

    #[test]
    fn unseen_tokens_are_finite() {
        let lm = NgramLm::train(&[vec!["a", "b"]], 3, 0.1).unwrap();
        let lp = lm.logprob(&["zzz", "yyy", "xxx"]);
        assert!(lp.is_finite() && lp < 0.0);
        let lm0 = NgramLm::train(&[vec!["a", "b"]], 2, 0.0).unwrap();
        assert!(lm0.logprob(&["b", "zzz"]).is_finite());
    }

    #[test]
    fn observed_contexts_normalized() {
        let corpus = vec![vec!["a", "b", "a", "c"], vec!["b", "b", "a"], vec!["c"]];
        for order in 1..=3 {
            let lm = NgramLm::train(&corpus, order, 0.3).unwrap();
            let vocab: Vec<&str> = lm.vocab().collect();
            for ctx in lm.contexts() {
                let s: f64 = vocab.iter().map(|w| lm.prob(&ctx, w)).sum();
                assert!((s - 1.0).abs() < 1e-9, "order {order} ctx {ctx:?}: {s}");
            }
        }
    }

    #[test]
    fn invalid() {
        let empty: Vec<Vec<&str>> = vec![vec![]];
        assert!(NgramLm::train(&empty, 2, 0.1).is_err());
        assert!(NgramLm::train(&[vec!["a"]], 0, 0.1).is_err());
    }
}
