//! Domain-feature difficulty scores and the bucketed probabilistic
//! curriculum sampler.
//!
//! Higher `q` means more in-domain. Bin 0 holds the highest-`q` records and
//! early phases weight it most.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SentencePair;
use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::translator::Scorer;

pub const DEFAULT_BINS: usize = 4;
const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyScore {
    pub q: f64,
    pub logprob_in: f64,
    pub logprob_out: f64,
    pub target_token_count: usize,
}

impl DifficultyScore {
    /// `q = (logprob_in - logprob_out) / target_token_count`.
    pub fn new(logprob_in: f64, logprob_out: f64, target_token_count: usize) -> Result<Self> {
        if target_token_count == 0 {
            return Err(Error::Score("difficulty needs a non-empty target".into()));
        }
        if !logprob_in.is_finite() || !logprob_out.is_finite() {
            return Err(Error::Score("scorer returned a non-finite log-probability".into()));
        }
        Ok(DifficultyScore {
            q: (logprob_in - logprob_out) / target_token_count as f64,
            logprob_in,
            logprob_out,
            target_token_count,
        })
    }

    pub fn recompute(&self) -> f64 {
        (self.logprob_in - self.logprob_out) / self.target_token_count as f64
    }
}

pub fn domain_feature(pair: &SentencePair, in_scorer: &dyn Scorer, out_scorer: &dyn Scorer) -> Result<DifficultyScore> {
    if pair.tgt.is_empty() {
        return Err(Error::Score("difficulty needs a non-empty target".into()));
    }
    let lp_in = in_scorer.logprob(&pair.src, &pair.tgt)?;
    let lp_out = out_scorer.logprob(&pair.src, &pair.tgt)?;
    DifficultyScore::new(lp_in, lp_out, pair.tgt.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRange {
    pub q_max: f64,
    pub q_min: f64,
}

/// Difficulty-quantile shards of record indices plus per-phase sampling
/// weights over them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumBins {
    pub bins: Vec<Vec<usize>>,
    pub ranges: Vec<BinRange>,
    pub schedule: Vec<Vec<f64>>,
}

/// Phase `t` spreads weight uniformly over bins `0..=t`; the last phase is
/// uniform over all bins.
pub fn default_schedule(bins: usize) -> Vec<Vec<f64>> {
    (0..bins)
        .map(|t| {
            let open = t + 1;
            (0..bins)
                .map(|b| if b < open { 1.0 / open as f64 } else { 0.0 })
                .collect()
        })
        .collect()
}

fn validate_weights(w: &[f64], bins: usize) -> Result<()> {
    if w.len() != bins {
        return Err(Error::config(format!(
            "weight vector has {} entries for {bins} bins",
            w.len()
        )));
    }
    if w.iter().any(|&x| x.is_nan() || x < 0.0) {
        return Err(Error::config("weights must be non-negative"));
    }
    let s: f64 = w.iter().sum();
    if s == 0.0 {
        return Err(Error::config("all-zero weight vector"));
    }
    if (s - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::config(format!("weights sum to {s}, expected 1")));
    }
    Ok(())
}

pub fn build_bins(q: &[f64], num_bins: usize) -> Result<CurriculumBins> {
    if num_bins == 0 {
        return Err(Error::config("need at least one bin"));
    }
    if num_bins > q.len() {
        return Err(Error::config(format!("{num_bins} bins for {} records", q.len())));
    }
    let mut order: Vec<usize> = (0..q.len()).collect();
    // sort_by is stable, so equal scores keep input order
    order.sort_by(|&a, &b| q[b].total_cmp(&q[a]));
    let base = q.len() / num_bins;
    let extra = q.len() % num_bins;
    let mut bins = Vec::with_capacity(num_bins);
    let mut ranges = Vec::with_capacity(num_bins);
    let mut start = 0;
    for b in 0..num_bins {
        let size = base + usize::from(b < extra);
        let bin = order[start..start + size].to_vec();
        ranges.push(BinRange {
            q_max: q[bin[0]],
            q_min: q[*bin.last().unwrap()],
        });
        bins.push(bin);
        start += size;
    }
    Ok(CurriculumBins {
        bins,
        ranges,
        schedule: default_schedule(num_bins),
    })
}

impl CurriculumBins {
    pub fn with_schedule(mut self, schedule: Vec<Vec<f64>>) -> Result<Self> {
        if schedule.is_empty() {
            return Err(Error::config("schedule needs at least one phase"));
        }
        for w in &schedule {
            validate_weights(w, self.bins.len())?;
        }
        self.schedule = schedule;
        Ok(self)
    }

    pub fn record_count(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }

    pub fn bin_of(&self, index: usize) -> Option<usize> {
        self.bins.iter().position(|b| b.contains(&index))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bins serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bins: CurriculumBins =
            serde_json::from_str(text).map_err(|e| Error::format("curriculum bins", e.to_string()))?;
        if bins.bins.iter().any(Vec::is_empty) {
            return Err(Error::format("curriculum bins", "empty bin"));
        }
        let schedule = bins.schedule.clone();
        bins.with_schedule(schedule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub index: usize,
    pub bin: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub batch: usize,
    pub phase: usize,
    pub samples: Vec<Sample>,
}

/// Infinite, seeded stream of mini-batches for one phase.
///
/// Each draw picks bin `b` with probability `w[b]`, then a record uniformly
/// from it. Batches are sorted by target length (stable) before emission.
pub struct CurriculumSampler<'a> {
    bins: &'a CurriculumBins,
    lengths: &'a [usize],
    phase: usize,
    cumulative: Vec<f64>,
    batch_size: usize,
    rng: ChaCha8Rng,
    coverage: Vec<Sample>,
    next_batch: usize,
}

impl<'a> CurriculumSampler<'a> {
    /// `lengths[i]` is the target token count of record `i`.
    pub fn new(
        bins: &'a CurriculumBins,
        phase: usize,
        batch_size: usize,
        seed: u64,
        lengths: &'a [usize],
    ) -> Result<Self> {
        let weights = bins
            .schedule
            .get(phase)
            .ok_or_else(|| Error::config(format!("phase {phase} not in a {}-phase schedule", bins.schedule.len())))?;
        validate_weights(weights, bins.bins.len())?;
        if batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        if lengths.len() < bins.record_count() {
            return Err(Error::config("fewer lengths than records"));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(CurriculumSampler {
            bins,
            lengths,
            phase,
            cumulative,
            batch_size,
            rng: rng_from(seed),
            coverage: Vec::new(),
            next_batch: 0,
        })
    }

    /// Emits every record of each positively weighted bin once (shuffled)
    /// before weighted sampling starts.
    pub fn with_coverage(mut self) -> Self {
        let weights = &self.bins.schedule[self.phase];
        let mut all: Vec<Sample> = self
            .bins
            .bins
            .iter()
            .enumerate()
            .filter(|(b, _)| weights[*b] > 0.0)
            .flat_map(|(b, idx)| idx.iter().map(move |&index| Sample { index, bin: b }))
            .collect();
        all.shuffle(&mut self.rng);
        all.reverse();
        self.coverage = all;
        self
    }

    fn draw(&mut self) -> Sample {
        if let Some(s) = self.coverage.pop() {
            return s;
        }
        let total = *self.cumulative.last().unwrap();
        let u = self.rng.gen::<f64>() * total;
        let last_open = self.bins.schedule[self.phase].iter().rposition(|&w| w > 0.0).unwrap();
        // zero-weight bins have no width in the cumulative sums and are never hit
        let bin = self.cumulative.partition_point(|&c| c <= u).min(last_open);
        let members = &self.bins.bins[bin];
        let index = members[self.rng.gen_range(0..members.len())];
        Sample { index, bin }
    }
}

impl Iterator for CurriculumSampler<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let mut samples: Vec<Sample> = (0..self.batch_size).map(|_| self.draw()).collect();
        samples.sort_by_key(|s| self.lengths[s.index]);
        let batch = Batch {
            batch: self.next_batch,
            phase: self.phase,
            samples,
        };
        self.next_batch += 1;
        Some(batch)
    }
}

pub fn cl_sample<'a>(
    bins: &'a CurriculumBins,
    phase: usize,
    batch_size: usize,
    seed: u64,
    lengths: &'a [usize],
) -> Result<CurriculumSampler<'a>> {
    CurriculumSampler::new(bins, phase, batch_size, seed, lengths)
}

/// Reads "index\tlogprob_in\tlogprob_out[\tq]" rows for a corpus of
/// `record_count` records, returned in index order. A trailing q column is
/// ignored; it is recomputed from the log-probabilities.
pub fn load_external_scores(path: impl AsRef<Path>, record_count: usize) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut slots: Vec<Option<(f64, f64)>> = vec![None; record_count];
    let mut rows = 0;
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let cols: Vec<&str> = line.split('\t').collect();
        let q_ok = cols.len() == 3 || (cols.len() == 4 && cols[3].parse::<f64>().is_ok());
        let parsed = q_ok
            .then(|| {
                Some((
                    cols[0].parse::<usize>().ok()?,
                    cols[1].parse::<f64>().ok()?,
                    cols[2].parse::<f64>().ok()?,
                ))
            })
            .flatten();
        let Some((idx, lp_in, lp_out)) = parsed else {
            return Err(Error::format(
                &ctx,
                format!("line {}: expected `index\\tlogprob_in\\tlogprob_out`", ln + 1),
            ));
        };
        let slot = slots.get_mut(idx).ok_or_else(|| {
            Error::format(
                &ctx,
                format!("line {}: index {idx} >= record count {record_count}", ln + 1),
            )
        })?;
        if slot.replace((lp_in, lp_out)).is_some() {
            return Err(Error::format(&ctx, format!("line {}: duplicate index {idx}", ln + 1)));
        }
    }
    let missing: Vec<String> = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_none())
        .map(|(i, _)| i.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::format(
            &ctx,
            format!(
                "{rows} score rows for {record_count} records; missing index {}",
                missing.join(", ")
            ),
        ));
    }
    Ok(slots.into_iter().map(Option::unwrap).collect())
}

/// Writes "index\tlogprob_in\tlogprob_out\tq" rows.
pub fn export_scores(scores: &[DifficultyScore], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (i, d) in scores.iter().enumerate() {
        out.push_str(&format!("{i}\t{}\t{}\t{}\n", d.logprob_in, d.logprob_out, d.q));
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
