//! Corpus BLEU and the training-loss numerics (KL, R-Drop, label smoothing).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_RDROP_ALPHA: f64 = 5.0;
pub const DEFAULT_LABEL_SMOOTHING: f64 = 0.1;
const NORM_TOLERANCE: f64 = 1e-9;

/// A probability distribution: non-negative entries summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Input("empty probability vector".into()));
        }
        if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::Input(
                "probability vector has negative or non-finite entries".into(),
            ));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Input(format!("probability vector sums to {s}")));
        }
        Ok(ProbVector(p))
    }

    pub fn uniform(dim: usize) -> Self {
        ProbVector(vec![1.0 / dim as f64; dim])
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let s: f64 = w.iter().sum();
        if s.is_nan() || s <= 0.0 {
            return Err(Error::Input("weights must have positive sum".into()));
        }
        ProbVector::new(w.iter().map(|x| x / s).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn kl(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Input(format!("dimension mismatch: {} vs {}", p.dim(), q.dim())));
    }
    Ok(p.0
        .iter()
        .zip(&q.0)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(PROB_FLOOR)).ln())
        .sum())
}

pub fn kl_bidirectional(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    Ok(kl(p, q)? + kl(q, p)?)
}

/// R-Drop consistency term: `alpha / 2 * (KL(p||q) + KL(q||p))`.
pub fn rdrop_reg(p: &ProbVector, q: &ProbVector, alpha: f64) -> Result<f64> {
    Ok(alpha / 2.0 * kl_bidirectional(p, q)?)
}

/// `-(1-ε) ln p[target] - (ε/V) Σ_v ln p[v]`.
pub fn label_smoothed_ce(p: &ProbVector, target: usize, epsilon: f64) -> Result<f64> {
    let v = p.dim();
    if target >= v {
        return Err(Error::Input(format!("target {target} out of range for dimension {v}")));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Input(format!("label smoothing {epsilon} outside [0, 1)")));
    }
    let ln = |x: f64| x.max(PROB_FLOOR).ln();
    let nll = -ln(p.0[target]);
    if epsilon == 0.0 {
        return Ok(nll);
    }
    let smooth: f64 = -p.0.iter().map(|&x| ln(x)).sum::<f64>() / v as f64;
    Ok((1.0 - epsilon) * nll + epsilon * smooth)
}

/// Per-token mean of [`label_smoothed_ce`] over a batch.
pub fn label_smoothed_ce_mean(batch: &[(ProbVector, usize)], epsilon: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let mut total = 0.0;
    for (p, t) in batch {
        total += label_smoothed_ce(p, *t, epsilon)?;
    }
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    #[default]
    None,
    /// Add one to matches and totals for orders n >= 2.
    Add1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub bleu: f64,
    pub brevity_penalty: f64,
    /// Modified n-gram precisions (fractions) for n = 1..=max_n.
    pub precisions: Vec<f64>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<S: AsRef<str>>(toks: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w.iter().map(|t| t.as_ref()).collect()).or_default() += 1;
        }
    }
    m
}

/// Corpus-level BLEU on pre-tokenized text.
///
/// Orders with no hypothesis n-grams at all (every hypothesis shorter than
/// n) are left out of the geometric mean.
pub fn bleu<H, R, S>(hypotheses: &[H], references: &[R], max_n: usize, smoothing: Smoothing) -> Result<BleuScore>
where
    H: AsRef<[S]>,
    R: AsRef<[S]>,
    S: AsRef<str>,
{
    if hypotheses.len() != references.len() {
        return Err(Error::Input(format!(
            "{} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::Input("BLEU needs at least one sentence".into()));
    }
    if max_n == 0 {
        return Err(Error::Input("max_n must be >= 1".into()));
    }
    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hypotheses.iter().zip(references) {
        let (h, r) = (h.as_ref(), r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=max_n {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            totals[n - 1] += h.len().saturating_sub(n - 1);
            matches[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    let precisions: Vec<f64> = (0..max_n)
        .map(|i| {
            let (m, t) = (matches[i] as f64, totals[i] as f64);
            match smoothing {
                Smoothing::Add1 if i > 0 => (m + 1.0) / (t + 1.0),
                _ if t == 0.0 => 0.0,
                _ => m / t,
            }
        })
        .collect();
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let effective: Vec<f64> = precisions
        .iter()
        .zip(&totals)
        .enumerate()
        .filter(|&(i, (_, &t))| t > 0 || (smoothing == Smoothing::Add1 && i > 0))
        .map(|(_, (&p, _))| p)
        .collect();
    let bleu = if hyp_len == 0 || effective.contains(&0.0) {
        0.0
    } else {
        let mean_log = effective.iter().map(|p| p.ln()).sum::<f64>() / effective.len() as f64;
        100.0 * brevity_penalty * mean_log.exp()
    };
    Ok(BleuScore {
        bleu,
        brevity_penalty,
        precisions,
        hyp_len,
        ref_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_corpora_score_100() {
        let c = vec![toks("the cat sat on the mat"), toks("a b"), toks("x")];
        let s = bleu(&c, &c, 4, Smoothing::None).unwrap();
        assert_eq!(s.bleu, 100.0);
    }

    #[test]
    fn short_hypothesis() {
        let s = bleu(
            &[toks("the cat sat")],
            &[toks("the cat sat on mat")],
            3,
            Smoothing::None,
        )
        .unwrap();
        assert_eq!(s.precisions, vec![1.0, 1.0, 1.0]);
        assert!((s.brevity_penalty - (1.0f64 - 5.0 / 3.0).exp()).abs() < 1e-15);
        assert!((s.bleu - 51.34).abs() < 0.01, "{}", s.bleu);
    }

    #[test]
    fn no_overlap_is_zero() {
        let s = bleu(&[toks("a b c")], &[toks("d e f")], 4, Smoothing::None).unwrap();
        assert_eq!(s.bleu, 0.0);
    }

    #[test]
    fn add1_rescues_missing_higher_orders() {
        let s = bleu(&[toks("a b c d")], &[toks("a c b d")], 4, Smoothing::Add1).unwrap();
        assert!(s.bleu > 0.0);
        assert_eq!(
            bleu(&[toks("a b c d")], &[toks("a c b d")], 4, Smoothing::None)
                .unwrap()
                .bleu,
            0.0
        );
    }

    #[test]
    fn length_mismatch() {
        assert!(bleu(&[toks("a")], &[toks("a"), toks("b")], 4, Smoothing::None).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = pv(&[0.5, 0.5]);
        let q = pv(&[0.25, 0.75]);
        assert_eq!(kl(&p, &p).unwrap(), 0.0);
        let pq = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl(&p, &q).unwrap() - pq).abs() < 1e-12);
        assert!((kl(&p, &q).unwrap() - 0.1438).abs() < 1e-4);
        assert!((kl(&q, &p).unwrap() - 0.1308).abs() < 1e-4);
        assert!((kl_bidirectional(&p, &q).unwrap() - 0.2746).abs() < 1e-4);
        assert!((rdrop_reg(&p, &q, 5.0).unwrap() - 0.6866).abs() < 1e-4);
        assert_eq!(rdrop_reg(&p, &q, 0.0).unwrap(), 0.0);
        assert!(kl(&p, &pv(&[1.0])).is_err());
    }

    #[test]
    fn zero_q_is_floored() {
        let p = pv(&[0.5, 0.5]);
        let q = pv(&[1.0, 0.0]);
        assert!(kl(&p, &q).unwrap().is_finite());
        assert_eq!(kl(&q, &p).unwrap(), 2f64.ln());
    }

    #[test]
    fn label_smoothing() {
        let u = ProbVector::uniform(4);
        assert!((label_smoothed_ce(&u, 2, 0.1).unwrap() - 4f64.ln()).abs() < 1e-9);
        let p = pv(&[0.7, 0.2, 0.1]);
        assert_eq!(label_smoothed_ce(&p, 1, 0.0).unwrap(), -(0.2f64.ln()));
        assert!(label_smoothed_ce(&p, 3, 0.1).is_err());
        assert!(label_smoothed_ce(&p, 0, 1.0).is_err());
        let mean = label_smoothed_ce_mean(&[(u.clone(), 0), (u, 1)], 0.1).unwrap();
        assert!((mean - 4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.4]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
    }
}
