//! IBM Model 1 lexical translation table trained with EM.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SentencePair;
use crate::error::{Error, Result};

pub const NULL_TOKEN: &str = "<NULL>";
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_ITERATIONS: usize = 5;
/// Default per-token log-score below which a pair counts as poorly aligned.
pub const DEFAULT_THRESHOLD: f64 = -6.0;

/// `t(f | e)`: rows keyed by source token `e` (including [`NULL_TOKEN`]),
/// each a distribution over target tokens `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationTable {
    rows: BTreeMap<String, BTreeMap<String, f64>>,
    /// Corpus log-likelihood before training and after each EM iteration.
    pub log_likelihood: Vec<f64>,
}

impl TranslationTable {
    pub fn prob(&self, tgt: &str, src: &str) -> f64 {
        self.rows.get(src).and_then(|r| r.get(tgt)).copied().unwrap_or(0.0)
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn row(&self, src: &str) -> Option<&BTreeMap<String, f64>> {
        self.rows.get(src)
    }

    /// `max_e t(tgt | e)` over the given source tokens plus NULL, floored.
    pub fn best_link<S: AsRef<str>>(&self, tgt: &str, src: &[S]) -> f64 {
        src.iter()
            .map(|e| self.prob(tgt, e.as_ref()))
            .chain(std::iter::once(self.prob(tgt, NULL_TOKEN)))
            .fold(PROB_FLOOR, f64::max)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let js = serde_json::to_vec(self).map_err(|e| Error::format("translation table", e.to_string()))?;
        std::fs::write(path, js).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }
}

struct Interner {
    ids: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    fn new() -> Self {
        Interner {
            ids: HashMap::new(),
            names: Vec::new(),
        }
    }

    fn id(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.ids.insert(s.to_string(), id);
        self.names.push(s.to_string());
        id
    }
}

/// A training pair with its (target position × source position) slot ids.
struct Encoded {
    src_len: usize,
    slots: Vec<u32>,
}

pub fn ibm1_train(pairs: &[SentencePair], iterations: usize) -> Result<TranslationTable> {
    if pairs.is_empty() {
        return Err(Error::config("IBM Model 1 needs at least one pair"));
    }
    if iterations == 0 {
        return Err(Error::config("IBM Model 1 needs at least one EM iteration"));
    }
    let mut src_vocab = Interner::new();
    let mut tgt_vocab = Interner::new();
    let null = src_vocab.id(NULL_TOKEN);
    let mut slot_of: HashMap<(u32, u32), u32> = HashMap::new();
    let mut slot_src: Vec<u32> = Vec::new();
    let mut slot_tgt: Vec<u32> = Vec::new();
    let mut encoded = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let src: Vec<u32> = std::iter::once(null)
            .chain(pair.src.tokens().iter().map(|t| src_vocab.id(t)))
            .collect();
        let mut slots = Vec::with_capacity(src.len() * pair.tgt.len());
        for f in pair.tgt.tokens() {
            let f = tgt_vocab.id(f);
            for &e in &src {
                let next = slot_src.len() as u32;
                let s = *slot_of.entry((e, f)).or_insert_with(|| {
                    slot_src.push(e);
                    slot_tgt.push(f);
                    next
                });
                slots.push(s);
            }
        }
        encoded.push(Encoded {
            src_len: src.len(),
            slots,
        });
    }

    let uniform = 1.0 / tgt_vocab.names.len().max(1) as f64;
    let mut t = vec![uniform; slot_src.len()];
    let mut history = Vec::with_capacity(iterations + 1);
    history.push(log_likelihood(&encoded, &t));
    let mut counts = vec![0.0; t.len()];
    let mut totals = vec![0.0; src_vocab.names.len()];
    for _ in 0..iterations {
        counts.iter_mut().for_each(|c| *c = 0.0);
        totals.iter_mut().for_each(|c| *c = 0.0);
        for enc in &encoded {
            for row in enc.slots.chunks(enc.src_len) {
                let denom: f64 = row.iter().map(|&s| t[s as usize]).sum();
                for &s in row {
                    let c = t[s as usize] / denom;
                    counts[s as usize] += c;
                    totals[slot_src[s as usize] as usize] += c;
                }
            }
        }
        for (s, p) in t.iter_mut().enumerate() {
            let total = totals[slot_src[s] as usize];
            *p = if total > 0.0 { counts[s] / total } else { 0.0 };
        }
        history.push(log_likelihood(&encoded, &t));
    }

    let mut rows: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (s, &p) in t.iter().enumerate() {
        let e = &src_vocab.names[slot_src[s] as usize];
        let f = &tgt_vocab.names[slot_tgt[s] as usize];
        rows.entry(e.clone()).or_default().insert(f.clone(), p);
    }
    Ok(TranslationTable {
        rows,
        log_likelihood: history,
    })
}

// Σ_pairs Σ_j ln( Σ_i t(f_j|e_i) / (l+1) )
fn log_likelihood(encoded: &[Encoded], t: &[f64]) -> f64 {
    encoded
        .iter()
        .flat_map(|enc| {
            enc.slots.chunks(enc.src_len).map(move |row| {
                let sum: f64 = row.iter().map(|&s| t[s as usize]).sum();
                (sum / enc.src_len as f64).max(PROB_FLOOR).ln()
            })
        })
        .sum()
}

/// Mean over target tokens of `ln max_i t(f_j | e_i ∪ NULL)`.
pub fn align_score(table: &TranslationTable, pair: &SentencePair) -> Result<f64> {
    if pair.src.is_empty() || pair.tgt.is_empty() {
        return Err(Error::Score("alignment score needs both sides non-empty".into()));
    }
    let src = pair.src.tokens();
    let sum: f64 = pair.tgt.tokens().iter().map(|f| table.best_link(f, src).ln()).sum();
    Ok(sum / pair.tgt.len() as f64)
}
