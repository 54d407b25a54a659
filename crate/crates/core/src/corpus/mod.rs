//! Core record types shared by every pipeline stage.

mod io;
mod stats;
mod tokenize;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::{is_nfc, UnicodeNormalization};

use crate::error::{Error, Result};

pub use io::{
    read_lines, read_records, record_writer, write_lines, write_records, ReadOptions, RecordFormat, RecordReader,
    RecordWriter,
};
pub use stats::{compute_stats, CorpusStats, RatioBin, StatsBuilder};
pub use tokenize::{is_cjk, Tokenizer};

pub fn nfc(text: &str) -> String {
    if is_nfc(text) {
        text.to_string()
    } else {
        text.nfc().collect()
    }
}

/// One side of a sentence pair: NFC text, its language, and cached tokens.
#[derive(Debug, Clone)]
pub struct Sentence {
    text: String,
    lang: String,
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new(text: impl AsRef<str>, lang: impl Into<String>) -> Self {
        let lang = lang.into();
        let tokenizer = Tokenizer::for_lang(&lang);
        Self::with_tokenizer(text, lang, tokenizer)
    }

    pub fn with_tokenizer(text: impl AsRef<str>, lang: impl Into<String>, tokenizer: Tokenizer) -> Self {
        let text = nfc(text.as_ref());
        let tokens = tokenizer.tokenize(&text);
        Sentence {
            text,
            lang: lang.into(),
            tokens,
        }
    }

    /// Builds a sentence from tokens, joined by the language's rule.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S], lang: impl Into<String>) -> Self {
        let lang = lang.into();
        let text = Tokenizer::for_lang(&lang).join(tokens);
        Sentence::new(text, lang)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn lang(&self) -> &str {
        &self.lang
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer::for_lang(&self.lang)
    }

    /// Returns a copy with `f` applied to the text; tokens are recomputed.
    pub fn map_text(&self, f: impl FnOnce(&str) -> String) -> Sentence {
        Sentence::new(f(&self.text), self.lang.clone())
    }
}

impl PartialEq for Sentence {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text && self.lang == other.lang
    }
}

impl Eq for Sentence {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    Authentic,
    Ft,
    BtBeam,
    BtSampling,
    BtTagged,
    DdFwd,
    DdBwd,
    BitReversed,
    Tel,
}

impl Provenance {
    pub const ALL: [Provenance; 9] = [
        Provenance::Authentic,
        Provenance::Ft,
        Provenance::BtBeam,
        Provenance::BtSampling,
        Provenance::BtTagged,
        Provenance::DdFwd,
        Provenance::DdBwd,
        Provenance::BitReversed,
        Provenance::Tel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Authentic => "AUTHENTIC",
            Provenance::Ft => "FT",
            Provenance::BtBeam => "BT_BEAM",
            Provenance::BtSampling => "BT_SAMPLING",
            Provenance::BtTagged => "BT_TAGGED",
            Provenance::DdFwd => "DD_FWD",
            Provenance::DdBwd => "DD_BWD",
            Provenance::BitReversed => "BIT_REVERSED",
            Provenance::Tel => "TEL",
        }
    }

    pub fn is_synthetic(self) -> bool {
        self != Provenance::Authentic
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Provenance::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown provenance `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentencePair {
    pub src: Sentence,
    pub tgt: Sentence,
    pub provenance: Provenance,
    pub scores: BTreeMap<String, f64>,
}

impl SentencePair {
    pub fn new(src: Sentence, tgt: Sentence, provenance: Provenance) -> Self {
        SentencePair {
            src,
            tgt,
            provenance,
            scores: BTreeMap::new(),
        }
    }

    pub fn authentic(src: Sentence, tgt: Sentence) -> Self {
        Self::new(src, tgt, Provenance::Authentic)
    }

    /// `|src tokens| / |tgt tokens|`; infinite when the target is empty.
    pub fn token_ratio(&self) -> f64 {
        self.src.len() as f64 / self.tgt.len() as f64
    }

    pub fn with_score(mut self, name: impl Into<String>, value: f64) -> Self {
        self.scores.insert(name.into(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub text: String,
    pub logprob: f64,
    pub rank: usize,
}

/// Ranked decoder output for one source sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    pub source: Sentence,
    pub hypotheses: Vec<Hypothesis>,
}

impl NBestList {
    /// Sorts by descending logprob (ties: text ascending), keeps at most
    /// `max`, and assigns ranks `1..=n`.
    pub fn from_scored(source: Sentence, mut scored: Vec<(String, f64)>, max: usize) -> Self {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(max);
        let hypotheses = scored
            .into_iter()
            .enumerate()
            .map(|(i, (text, logprob))| Hypothesis {
                text,
                logprob,
                rank: i + 1,
            })
            .collect();
        NBestList { source, hypotheses }
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn best(&self) -> Option<&Hypothesis> {
        self.hypotheses.first()
    }

    pub fn validate(&self, max: usize) -> Result<()> {
        let n = self.hypotheses.len();
        if n == 0 || n > max {
            return Err(Error::Input(format!("n-best size {n} outside 1..={max}")));
        }
        for (i, h) in self.hypotheses.iter().enumerate() {
            if h.rank != i + 1 {
                return Err(Error::Input(format!("rank {} at position {}", h.rank, i)));
            }
            if i > 0 && h.logprob > self.hypotheses[i - 1].logprob {
                return Err(Error::Input("hypotheses not sorted by logprob".into()));
            }
        }
        Ok(())
    }
}
