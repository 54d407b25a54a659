//! Ordered pair filters with per-filter accounting.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::align::{align_score, TranslationTable, DEFAULT_THRESHOLD};
use super::lid::{lid_classify, LidModel};
use crate::corpus::{Sentence, SentencePair};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_TOKENS: usize = 150;
pub const DEFAULT_RATIO_LO: f64 = 0.25;
pub const DEFAULT_RATIO_HI: f64 = 4.0;
const MAX_REJECTED_SAMPLES: usize = 5;

fn default_max_tokens() -> usize {
    DEFAULT_MAX_TOKENS
}
fn default_lo() -> f64 {
    DEFAULT_RATIO_LO
}
fn default_hi() -> f64 {
    DEFAULT_RATIO_HI
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

/// One entry of a filter config. Model paths are resolved relative to the
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterSpec {
    /// Language identification: each side must classify as its own language.
    Lid {
        model: PathBuf,
        #[serde(default)]
        min_margin: f64,
    },
    /// IBM Model 1 alignment score must reach `threshold`.
    Align {
        table: PathBuf,
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    /// Drop pairs where either side has more than `max` tokens.
    MaxTokens {
        #[serde(default = "default_max_tokens")]
        max: usize,
    },
    /// Drop pairs with `src/tgt` token ratio above `hi` or below `lo`.
    Ratio {
        #[serde(default = "default_lo")]
        lo: f64,
        #[serde(default = "default_hi")]
        hi: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub filters: Vec<FilterSpec>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            filters: vec![
                FilterSpec::MaxTokens {
                    max: DEFAULT_MAX_TOKENS,
                },
                FilterSpec::Ratio {
                    lo: DEFAULT_RATIO_LO,
                    hi: DEFAULT_RATIO_HI,
                },
            ],
        }
    }
}

impl FilterConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("filter config: {e}")))
    }

    /// Loads a TOML config and makes relative model paths absolute.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for f in &mut self.filters {
            if let FilterSpec::Lid { model: p, .. } | FilterSpec::Align { table: p, .. } = f {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

pub trait PairFilter: Send + Sync {
    fn name(&self) -> &str;
    fn keep(&self, pair: &SentencePair) -> bool;
}

pub struct MaxTokens(pub usize);

impl PairFilter for MaxTokens {
    fn name(&self) -> &str {
        "max_tokens"
    }

    fn keep(&self, pair: &SentencePair) -> bool {
        pair.src.len() <= self.0 && pair.tgt.len() <= self.0
    }
}

pub struct RatioFilter {
    pub lo: f64,
    pub hi: f64,
}

impl PairFilter for RatioFilter {
    fn name(&self) -> &str {
        "ratio"
    }

    fn keep(&self, pair: &SentencePair) -> bool {
        // NaN (both sides empty) compares false and is dropped
        let r = pair.token_ratio();
        r >= self.lo && r <= self.hi
    }
}

pub struct LidFilter {
    pub model: LidModel,
    pub min_margin: f64,
}

impl LidFilter {
    fn side_ok(&self, s: &Sentence) -> bool {
        if !self.model.covers(s.lang()) {
            return true;
        }
        match lid_classify(&self.model, s.text()) {
            Ok((lang, margin)) => lang == s.lang() && margin >= self.min_margin,
            Err(_) => false,
        }
    }
}

impl PairFilter for LidFilter {
    fn name(&self) -> &str {
        "lid"
    }

    fn keep(&self, pair: &SentencePair) -> bool {
        self.side_ok(&pair.src) && self.side_ok(&pair.tgt)
    }
}

pub struct AlignFilter {
    pub table: TranslationTable,
    pub threshold: f64,
}

impl PairFilter for AlignFilter {
    fn name(&self) -> &str {
        "align"
    }

    fn keep(&self, pair: &SentencePair) -> bool {
        align_score(&self.table, pair).is_ok_and(|s| s >= self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedSample {
    pub src: String,
    pub tgt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCount {
    pub name: String,
    pub input: usize,
    pub kept: usize,
    pub dropped: usize,
    pub rejected: Vec<RejectedSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub output: usize,
    pub filters: Vec<FilterCount>,
}

impl FilterReport {
    pub fn new(names: impl IntoIterator<Item = String>) -> Self {
        FilterReport {
            input: 0,
            output: 0,
            filters: names
                .into_iter()
                .map(|name| FilterCount {
                    name,
                    input: 0,
                    kept: 0,
                    dropped: 0,
                    rejected: Vec::new(),
                })
                .collect(),
        }
    }

    /// Records a verdict: `None` if the pair passed every filter, else the
    /// index of the filter that dropped it.
    pub fn record(&mut self, pair: &SentencePair, verdict: Option<usize>) {
        self.input += 1;
        let reached = verdict.map_or(self.filters.len(), |i| i + 1);
        for (i, f) in self.filters.iter_mut().take(reached).enumerate() {
            f.input += 1;
            if verdict == Some(i) {
                f.dropped += 1;
                if f.rejected.len() < MAX_REJECTED_SAMPLES {
                    f.rejected.push(RejectedSample {
                        src: pair.src.text().to_string(),
                        tgt: pair.tgt.text().to_string(),
                    });
                }
            } else {
                f.kept += 1;
            }
        }
        if verdict.is_none() {
            self.output += 1;
        }
    }

    pub fn dropped(&self) -> usize {
        self.filters.iter().map(|f| f.dropped).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub struct FilterChain {
    filters: Vec<Box<dyn PairFilter>>,
}

impl FilterChain {
    pub fn new(filters: Vec<Box<dyn PairFilter>>) -> Self {
        FilterChain { filters }
    }

    pub fn from_config(cfg: &FilterConfig) -> Result<Self> {
        let mut filters: Vec<Box<dyn PairFilter>> = Vec::with_capacity(cfg.filters.len());
        for spec in &cfg.filters {
            filters.push(match spec {
                FilterSpec::MaxTokens { max } => Box::new(MaxTokens(*max)),
                FilterSpec::Ratio { lo, hi } => {
                    if lo > hi {
                        return Err(Error::config(format!("ratio filter: lo {lo} > hi {hi}")));
                    }
                    Box::new(RatioFilter { lo: *lo, hi: *hi })
                }
                FilterSpec::Lid { model, min_margin } => Box::new(LidFilter {
                    model: LidModel::load(model)?,
                    min_margin: *min_margin,
                }),
                FilterSpec::Align { table, threshold } => Box::new(AlignFilter {
                    table: TranslationTable::load(table)?,
                    threshold: *threshold,
                }),
            });
        }
        Ok(FilterChain { filters })
    }

    pub fn names(&self) -> Vec<String> {
        self.filters.iter().map(|f| f.name().to_string()).collect()
    }

    pub fn new_report(&self) -> FilterReport {
        FilterReport::new(self.names())
    }

    /// Index of the first filter rejecting `pair`, if any.
    pub fn verdict(&self, pair: &SentencePair) -> Option<usize> {
        self.filters.iter().position(|f| !f.keep(pair))
    }

    /// Lazily filters a stream, accounting into `report`.
    pub fn filter<'a, I>(&'a self, pairs: I, report: &'a mut FilterReport) -> impl Iterator<Item = SentencePair> + 'a
    where
        I: IntoIterator<Item = SentencePair> + 'a,
    {
        pairs.into_iter().filter(move |p| {
            let v = self.verdict(p);
            report.record(p, v);
            v.is_none()
        })
    }

    /// Filters a batch in parallel; order and report are independent of the
    /// thread count.
    pub fn filter_batch(&self, pairs: Vec<SentencePair>, report: &mut FilterReport) -> Vec<SentencePair> {
        let verdicts: Vec<Option<usize>> = pairs.par_iter().map(|p| self.verdict(p)).collect();
        pairs
            .into_iter()
            .zip(verdicts)
            .filter_map(|(p, v)| {
                report.record(&p, v);
                v.is_none().then_some(p)
            })
            .collect()
    }
}

pub fn filter_chain<I>(pairs: I, config: &FilterConfig) -> Result<(Vec<SentencePair>, FilterReport)>
where
    I: IntoIterator<Item = SentencePair>,
{
    let chain = FilterChain::from_config(config)?;
    let mut report = chain.new_report();
    let kept: Vec<_> = chain.filter(pairs, &mut report).collect();
    Ok((kept, report))
}
