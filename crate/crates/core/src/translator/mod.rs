//! Translation and scoring interfaces plus deterministic desk-scale
//! implementations.

mod channel;
mod dict;
mod lm;

pub use channel::{ChannelScorer, LmScorer};
pub use dict::{DictTranslator, Lexicon};
pub use lm::NgramLm;

use serde::{Deserialize, Serialize};

use crate::corpus::{NBestList, Sentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecodeMode {
    #[serde(alias = "beam")]
    Beam,
    #[serde(alias = "sampling")]
    Sampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeSpec {
    pub mode: DecodeMode,
    /// Beam width, or number of samples drawn.
    pub width: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl DecodeSpec {
    pub fn beam(width: usize) -> Self {
        DecodeSpec {
            mode: DecodeMode::Beam,
            width,
            temperature: 1.0,
            seed: 0,
        }
    }

    pub fn sampling(samples: usize, seed: u64) -> Self {
        DecodeSpec {
            mode: DecodeMode::Sampling,
            width: samples,
            temperature: 1.0,
            seed,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 1 {
            return Err(Error::config("decode width must be >= 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// A translation model. Implementations must be deterministic given
/// `(source, spec)` and return at most `n` hypotheses sorted by logprob.
pub trait Translator: Send + Sync {
    fn translate(&self, source: &Sentence, spec: &DecodeSpec, n: usize) -> Result<NBestList>;

    /// Target language of the output.
    fn target_lang(&self) -> &str;

    fn one_best(&self, source: &Sentence, spec: &DecodeSpec) -> Result<Sentence> {
        let nb = self.translate(source, spec, 1)?;
        let best = nb
            .best()
            .ok_or_else(|| Error::Translate(format!("no hypothesis for `{}`", source.text())))?;
        Ok(Sentence::new(&best.text, self.target_lang()))
    }
}

/// `log P(tgt | src)` in nats, summed over target tokens.
pub trait Scorer: Send + Sync {
    fn logprob(&self, src: &Sentence, tgt: &Sentence) -> Result<f64>;
}

impl<T: Translator + ?Sized> Translator for &T {
    fn translate(&self, source: &Sentence, spec: &DecodeSpec, n: usize) -> Result<NBestList> {
        (**self).translate(source, spec, n)
    }

    fn target_lang(&self) -> &str {
        (**self).target_lang()
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn logprob(&self, src: &Sentence, tgt: &Sentence) -> Result<f64> {
        (**self).logprob(src, tgt)
    }
}
