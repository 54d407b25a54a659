//! Character n-gram Naive Bayes language identification.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_K: f64 = 0.5;
/// Probability used for events the smoothed model assigns zero mass.
pub const UNSEEN_FLOOR: f64 = 1e-10;

const PAD: char = '\u{2}';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LangTable {
    total: u64,
    counts: BTreeMap<String, u64>,
}

/// Per-language add-k smoothed distributions over character n-grams.
///
/// The event space is every n-gram seen in training (across all languages)
/// plus one unknown-event bucket, so each language's probabilities sum to 1
/// over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidModel {
    order: usize,
    k: f64,
    /// Event-space size including the unknown bucket.
    events: u64,
    langs: BTreeMap<String, LangTable>,
}

/// Character n-grams of `text`, one ending at every character position; the
/// start is padded with `order - 1` boundary symbols.
pub fn char_ngrams(text: &str, order: usize) -> Vec<String> {
    let mut chars: Vec<char> = std::iter::repeat_n(PAD, order - 1).collect();
    chars.extend(text.chars());
    chars.windows(order).map(|w| w.iter().collect()).collect()
}

pub fn lid_train<S: AsRef<str>>(samples: &BTreeMap<String, Vec<S>>, order: usize, k: f64) -> Result<LidModel> {
    if samples.len() < 2 {
        return Err(Error::config("language identification needs at least 2 languages"));
    }
    if order == 0 {
        return Err(Error::config("n-gram order must be >= 1"));
    }
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::config(format!("smoothing k must be >= 0, got {k}")));
    }
    let mut langs = BTreeMap::new();
    let mut vocab = BTreeSet::new();
    for (lang, texts) in samples {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut total = 0u64;
        for t in texts {
            for g in char_ngrams(t.as_ref(), order) {
                total += 1;
                *counts.entry(g).or_default() += 1;
            }
        }
        if total == 0 {
            return Err(Error::config(format!("empty training sample for `{lang}`")));
        }
        vocab.extend(counts.keys().cloned());
        langs.insert(lang.clone(), LangTable { total, counts });
    }
    Ok(LidModel {
        order,
        k,
        events: vocab.len() as u64 + 1,
        langs,
    })
}

impl LidModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.langs.keys().map(String::as_str)
    }

    pub fn covers(&self, lang: &str) -> bool {
        self.langs.contains_key(lang)
    }

    pub fn event_count(&self) -> u64 {
        self.events
    }

    /// Smoothed P(ngram | lang), floored. `None` for an unknown language.
    pub fn prob(&self, lang: &str, ngram: &str) -> Option<f64> {
        let t = self.langs.get(lang)?;
        let c = t.counts.get(ngram).copied().unwrap_or(0) as f64;
        let p = (c + self.k) / (t.total as f64 + self.k * self.events as f64);
        Some(if p > 0.0 { p } else { UNSEEN_FLOOR })
    }

    /// Sum of P(event | lang) over the whole event space.
    pub fn total_mass(&self, lang: &str) -> Option<f64> {
        let t = self.langs.get(lang)?;
        let denom = t.total as f64 + self.k * self.events as f64;
        let seen: f64 = t.counts.values().map(|&c| (c as f64 + self.k) / denom).sum();
        let unseen_events = self.events - t.counts.len() as u64;
        Some(seen + unseen_events as f64 * self.k / denom)
    }

    /// Summed log-probability of `text` under each language.
    pub fn scores(&self, text: &str) -> Vec<(String, f64)> {
        let grams = char_ngrams(text, self.order);
        self.langs
            .keys()
            .map(|lang| {
                let s = grams.iter().map(|g| self.prob(lang, g).unwrap().ln()).sum();
                (lang.clone(), s)
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let js = serde_json::to_vec(self).map_err(|e| Error::format("lid model", e.to_string()))?;
        std::fs::write(path, js).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }
}

/// Best language and its margin: best minus runner-up average per-char
/// log-probability.
pub fn lid_classify(model: &LidModel, text: &str) -> Result<(String, f64)> {
    let len = text.chars().count();
    if len == 0 {
        return Err(Error::Classification("cannot classify empty text".into()));
    }
    let mut scores = model.scores(text);
    // stable: equal scores keep language order
    scores.sort_by(|a, b| b.1.total_cmp(&a.1));
    let best = &scores[0];
    let margin = (best.1 - scores[1].1) / len as f64;
    Ok((best.0.clone(), margin))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples() -> BTreeMap<String, Vec<&'static str>> {
        let mut m = BTreeMap::new();
        m.insert(
            "en".to_string(),
            vec![
                "hello world how are you today",
                "the cat sat on the mat and the dog ran",
            ],
        );
        m.insert("zh".to_string(), vec!["你好世界今天怎么样", "猫坐在垫子上狗跑了"]);
        m
    }

    #[test]
    fn structural() {
        let m = lid_train(&samples(), 3, 0.5).unwrap();
        assert_eq!(m.languages().collect::<Vec<_>>(), vec!["en", "zh"]);
    }

    #[test]
    fn distributions_normalized() {
        let m = lid_train(&samples(), 3, 0.5).unwrap();
        for l in ["en", "zh"] {
            assert!((m.total_mass(l).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_language_rejected() {
        let mut s = samples();
        s.remove("zh");
        assert!(matches!(lid_train(&s, 3, 0.5), Err(Error::Config(_))));
    }

    #[test]
    fn zero_k_unseen_uses_floor() {
        let m = lid_train(&samples(), 3, 0.0).unwrap();
        let (lang, margin) = lid_classify(&m, "qqqq zzzz").unwrap();
        assert!(margin.is_finite());
        assert!(m.covers(&lang));
        assert_eq!(m.prob("en", "qqq"), Some(UNSEEN_FLOOR));
    }

    #[test]
    fn empty_text_is_error() {
        let m = lid_train(&samples(), 3, 0.5).unwrap();
        assert!(matches!(lid_classify(&m, ""), Err(Error::Classification(_))));
    }

    #[test]
    fn ngram_padding() {
        assert_eq!(char_ngrams("ab", 2), vec!["\u{2}a", "ab"]);
        assert_eq!(char_ngrams("ab", 1), vec!["a", "b"]);
    }
}
