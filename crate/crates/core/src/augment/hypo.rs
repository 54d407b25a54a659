use serde::{Deserialize, Serialize};

use crate::corpus::{Hypothesis, NBestList, Sentence, SentencePair};
use crate::error::{Error, Result};
use crate::translator::{DecodeSpec, Translator};

pub const DEFAULT_QE_THRESHOLD: f64 = 0.8;
pub const DEFAULT_NBEST: usize = 10;

pub const DEFAULT_APE_TEMPLATE: &str = "Source: {source}\nCandidate translations:\n{nbest}\nImproved translation:";

/// Reference-free quality score for a (src, tgt) pair.
pub trait QualityEstimator: Send + Sync {
    fn score(&self, pair: &SentencePair) -> Result<f64>;
}

/// `clamp(1 - |ln(|src| / |tgt|)|, 0, 1)`; 0 when either side is empty.
#[derive(Debug, Clone, Copy, Default)]
pub struct LengthRatioQe;

impl QualityEstimator for LengthRatioQe {
    fn score(&self, pair: &SentencePair) -> Result<f64> {
        let (s, t) = (pair.src.len(), pair.tgt.len());
        if s == 0 || t == 0 {
            return Ok(0.0);
        }
        Ok((1.0 - (s as f64 / t as f64).ln().abs()).clamp(0.0, 1.0))
    }
}

/// Reads a precomputed score carried on each record.
#[derive(Debug, Clone)]
pub struct ScoreFieldQe {
    pub field: String,
}

impl ScoreFieldQe {
    pub fn new(field: impl Into<String>) -> Self {
        ScoreFieldQe { field: field.into() }
    }
}

impl QualityEstimator for ScoreFieldQe {
    fn score(&self, pair: &SentencePair) -> Result<f64> {
        pair.scores
            .get(&self.field)
            .copied()
            .ok_or_else(|| Error::Score(format!("record has no `{}` score", self.field)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApeRecord {
    pub source: Sentence,
    pub nbest: NBestList,
    pub reference: Sentence,
    pub qe_score: f64,
}

#[derive(Serialize, Deserialize)]
struct ApeJson {
    source: String,
    nbest: Vec<Hypothesis>,
    reference: String,
    qe_score: f64,
    #[serde(default = "und")]
    lang_src: String,
    #[serde(default = "und")]
    lang_tgt: String,
}

fn und() -> String {
    "und".into()
}

impl ApeRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&ApeJson {
            source: self.source.text().to_string(),
            nbest: self.nbest.hypotheses.clone(),
            reference: self.reference.text().to_string(),
            qe_score: self.qe_score,
            lang_src: self.source.lang().to_string(),
            lang_tgt: self.reference.lang().to_string(),
        })
        .expect("ape record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let j: ApeJson = serde_json::from_str(line).map_err(|e| Error::format("ape record", e.to_string()))?;
        let source = Sentence::new(&j.source, j.lang_src);
        let nbest = NBestList {
            source: source.clone(),
            hypotheses: j.nbest,
        };
        Ok(ApeRecord {
            source,
            nbest,
            reference: Sentence::new(&j.reference, j.lang_tgt),
            qe_score: j.qe_score,
        })
    }
}

/// Pairs scoring strictly above `threshold`, each with the base model's
/// beam-`n` n-best and the original target as reference.
pub fn hypo_build(
    pairs: &[SentencePair],
    base: &dyn Translator,
    qe: &dyn QualityEstimator,
    threshold: f64,
    n: usize,
) -> Result<Vec<ApeRecord>> {
    let spec = DecodeSpec::beam(n);
    let mut out = Vec::new();
    for pair in pairs {
        let qe_score = qe.score(pair)?;
        if qe_score.is_nan() || qe_score <= threshold {
            continue;
        }
        let nbest = base.translate(&pair.src, &spec, n)?;
        out.push(ApeRecord {
            source: pair.src.clone(),
            nbest,
            reference: pair.tgt.clone(),
            qe_score,
        });
    }
    Ok(out)
}

pub fn ape_prompt(record: &ApeRecord, template: &str) -> Result<String> {
    for ph in ["{source}", "{nbest}"] {
        if !template.contains(ph) {
            return Err(Error::Template(format!("template lacks {ph}")));
        }
    }
    let nbest = record
        .nbest
        .hypotheses
        .iter()
        .map(|h| format!("{}. {}", h.rank, h.text))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(template
        .replace("{source}", record.source.text())
        .replace("{nbest}", &nbest))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    pub prompt: String,
    pub completion: String,
}

pub fn sft_example(record: &ApeRecord, template: &str) -> Result<SftExample> {
    Ok(SftExample {
        prompt: ape_prompt(record, template)?,
        completion: record.reference.text().to_string(),
    })
}
