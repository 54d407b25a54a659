//! Synthetic-data strategies: every output record is tagged with the
//! provenance of the strategy that produced it.

mod hypo;
mod schedule;

pub use hypo::{
    ape_prompt, hypo_build, sft_example, ApeRecord, LengthRatioQe, QualityEstimator, ScoreFieldQe, SftExample,
    DEFAULT_APE_TEMPLATE, DEFAULT_NBEST, DEFAULT_QE_THRESHOLD,
};
pub use schedule::{at_schedule, Phase, Schedule};

use rand::seq::index;
use rayon::prelude::*;

use crate::corpus::{Provenance, Sentence, SentencePair, Tokenizer};
use crate::error::{Error, Result};
use crate::preprocess::dedup;
use crate::seed::{derive_seed, rng_from};
use crate::translator::{DecodeMode, DecodeSpec, Translator};

pub const DEFAULT_BT_TAG: &str = "<BT>";

/// Original pairs followed by their direction-reversed copies.
pub fn bit_reconstruct(pairs: &[SentencePair]) -> Vec<SentencePair> {
    let reversed = pairs
        .iter()
        .map(|p| SentencePair::new(p.tgt.clone(), p.src.clone(), Provenance::BitReversed));
    pairs.iter().cloned().chain(reversed).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DdOutput {
    pub pairs: Vec<SentencePair>,
    /// Records whose forward or backward translation failed.
    pub skipped: usize,
}

/// Original data merged with one forward and one backward model's 1-best
/// translations: originals, then `DD_FWD` pairs, then `DD_BWD` pairs.
pub fn dd_generate(pairs: &[SentencePair], fwd: &dyn Translator, bwd: &dyn Translator, dedup_output: bool) -> DdOutput {
    let spec = DecodeSpec::beam(1);
    let fwd_out: Vec<Option<SentencePair>> = pairs
        .par_iter()
        .map(|p| {
            fwd.one_best(&p.src, &spec)
                .ok()
                .map(|t| SentencePair::new(p.src.clone(), t, Provenance::DdFwd))
        })
        .collect();
    let bwd_out: Vec<Option<SentencePair>> = pairs
        .par_iter()
        .map(|p| {
            bwd.one_best(&p.tgt, &spec)
                .ok()
                .map(|s| SentencePair::new(s, p.tgt.clone(), Provenance::DdBwd))
        })
        .collect();
    let skipped = fwd_out.iter().chain(&bwd_out).filter(|p| p.is_none()).count();
    let all = pairs
        .iter()
        .cloned()
        .chain(fwd_out.into_iter().flatten())
        .chain(bwd_out.into_iter().flatten());
    let pairs = if dedup_output {
        dedup(all).collect()
    } else {
        all.collect()
    };
    DdOutput { pairs, skipped }
}

/// Forward translation: a seeded uniform sample (without replacement) of the
/// source monolingual corpus, paired with the teacher's 1-best. Output keeps
/// corpus order.
pub fn ft_generate(
    mono_src: &[Sentence],
    teacher: &dyn Translator,
    sample_size: usize,
    seed: u64,
) -> Result<Vec<SentencePair>> {
    if sample_size > mono_src.len() {
        return Err(Error::config(format!(
            "sample size {sample_size} exceeds corpus size {}",
            mono_src.len()
        )));
    }
    let mut picked = ft_sample_indices(mono_src.len(), sample_size, seed);
    picked.sort_unstable();
    let spec = DecodeSpec::beam(1);
    picked
        .par_iter()
        .map(|&i| {
            let src = &mono_src[i];
            let tgt = teacher.one_best(src, &spec)?;
            Ok(SentencePair::new(src.clone(), tgt, Provenance::Ft))
        })
        .collect()
}

/// Indices chosen by [`ft_generate`] for a corpus of `len` sentences.
pub fn ft_sample_indices(len: usize, sample_size: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from(seed);
    index::sample(&mut rng, len, sample_size).into_vec()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtOptions {
    pub mode: DecodeMode,
    pub tagged: bool,
    pub tag: String,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for BtOptions {
    fn default() -> Self {
        BtOptions {
            mode: DecodeMode::Beam,
            tagged: false,
            tag: DEFAULT_BT_TAG.to_string(),
            temperature: 1.0,
            seed: 0,
        }
    }
}

/// Back translation of target-side monolingual text. With `tagged`, the tag
/// becomes token 0 of every synthetic source.
pub fn bt_generate(mono_tgt: &[Sentence], reverse: &dyn Translator, opts: &BtOptions) -> Result<Vec<SentencePair>> {
    let src_lang = reverse.target_lang();
    if opts.tagged {
        let toks = Tokenizer::for_lang(src_lang).tokenize(&opts.tag);
        if toks.len() != 1 || toks[0] != opts.tag {
            return Err(Error::config(format!(
                "BT tag `{}` must be a single non-empty token",
                opts.tag
            )));
        }
    }
    let provenance = match (opts.tagged, opts.mode) {
        (true, _) => Provenance::BtTagged,
        (false, DecodeMode::Beam) => Provenance::BtBeam,
        (false, DecodeMode::Sampling) => Provenance::BtSampling,
    };
    mono_tgt
        .par_iter()
        .enumerate()
        .map(|(i, tgt)| {
            let spec = match opts.mode {
                DecodeMode::Beam => DecodeSpec::beam(1),
                DecodeMode::Sampling => DecodeSpec::sampling(1, derive_seed(opts.seed, &(i as u64).to_le_bytes()))
                    .with_temperature(opts.temperature),
            };
            let synth = reverse.one_best(tgt, &spec)?;
            let src = if opts.tagged {
                Sentence::new(format!("{} {}", opts.tag, synth.text()), src_lang)
            } else {
                synth
            };
            Ok(SentencePair::new(src, tgt.clone(), provenance))
        })
        .collect()
}

/// Every model's 1-best for every test source, model-major.
pub fn tel_build(test_sources: &[Sentence], models: &[&dyn Translator]) -> Result<Vec<SentencePair>> {
    if models.is_empty() {
        return Err(Error::config("TEL needs at least one model"));
    }
    let spec = DecodeSpec::beam(1);
    let mut out = Vec::with_capacity(models.len() * test_sources.len());
    for model in models {
        let translated: Result<Vec<SentencePair>> = test_sources
            .par_iter()
            .map(|s| Ok(SentencePair::new(s.clone(), model.one_best(s, &spec)?, Provenance::Tel)))
            .collect();
        out.extend(translated?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::translator::{DictTranslator, Lexicon};

    fn pairs(n: usize) -> Vec<SentencePair> {
        (0..n)
            .map(|i| {
                SentencePair::authentic(
                    Sentence::new(format!("s{i} a"), "en"),
                    Sentence::new(format!("t{i} b"), "de"),
                )
            })
            .collect()
    }

    fn mono(n: usize, lang: &str) -> Vec<Sentence> {
        (0..n).map(|i| Sentence::new(format!("w{i} x y"), lang)).collect()
    }

    #[test]
    fn bit_example() {
        let p = pairs(1);
        let out = bit_reconstruct(&p);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0], p[0]);
        assert_eq!(out[1].src, p[0].tgt);
        assert_eq!(out[1].tgt, p[0].src);
        assert_eq!(out[1].provenance, Provenance::BitReversed);
        assert!(bit_reconstruct(&[]).is_empty());
    }

    #[test]
    fn dd_counts() {
        let fwd = DictTranslator::new(Lexicon::default(), "de");
        let bwd = DictTranslator::new(Lexicon::default(), "en");
        let out = dd_generate(&pairs(10), &fwd, &bwd, false);
        assert_eq!(out.pairs.len(), 30);
        let hist = crate::corpus::compute_stats(&out.pairs).provenance;
        assert_eq!(hist[&Provenance::Authentic], 10);
        assert_eq!(hist[&Provenance::DdFwd], 10);
        assert_eq!(hist[&Provenance::DdBwd], 10);
    }

    #[test]
    fn dd_identity_dedups_to_originals() {
        let same: Vec<SentencePair> = (0..10)
            .map(|i| {
                SentencePair::authentic(
                    Sentence::new(format!("w{i}"), "en"),
                    Sentence::new(format!("w{i}"), "en"),
                )
            })
            .collect();
        let id = DictTranslator::new(Lexicon::default(), "en");
        let out = dd_generate(&same, &id, &id, false);
        for (orig, fwd) in same.iter().zip(&out.pairs[10..20]) {
            assert_eq!((&orig.src, &orig.tgt), (&fwd.src, &fwd.tgt));
        }
        assert_eq!(dd_generate(&same, &id, &id, true).pairs.len(), 10);
    }

    #[test]
    fn ft_sampling() {
        let teacher = DictTranslator::new(Lexicon::default(), "de");
        let m = mono(1000, "en");
        let a = ft_generate(&m, &teacher, 100, 9).unwrap();
        assert_eq!(a.len(), 100);
        assert!(a.iter().all(|p| p.provenance == Provenance::Ft));
        assert_eq!(a, ft_generate(&m, &teacher, 100, 9).unwrap());
        assert!(ft_generate(&m, &teacher, 1001, 9).is_err());
    }

    #[test]
    fn bt_tagging() {
        let rev = DictTranslator::new(
            Lexicon::new([("i", "je", 1.0), ("love", "t", 0.5), ("love", "aime", 0.5)]).unwrap(),
            "fr",
        );
        let tgt = vec![Sentence::new("i love you", "en")];
        let opts = BtOptions {
            tagged: true,
            ..Default::default()
        };
        let out = bt_generate(&tgt, &rev, &opts).unwrap();
        assert_eq!(out[0].src.tokens()[0], "<BT>");
        assert_eq!(out[0].src.tokens().iter().filter(|t| *t == "<BT>").count(), 1);
        assert_eq!(out[0].provenance, Provenance::BtTagged);

        let plain = bt_generate(&tgt, &rev, &BtOptions::default()).unwrap();
        assert_eq!(plain[0].provenance, Provenance::BtBeam);
        assert!(!plain[0].src.text().contains("<BT>"));

        let bad = BtOptions {
            tagged: true,
            tag: "two words".into(),
            ..Default::default()
        };
        assert!(bt_generate(&tgt, &rev, &bad).is_err());
    }

    #[test]
    fn bt_sampling_deterministic() {
        let rev = DictTranslator::new(Lexicon::new([("a", "x", 0.5), ("a", "y", 0.5)]).unwrap(), "fr");
        let tgt: Vec<Sentence> = (0..20).map(|_| Sentence::new("a a a a", "en")).collect();
        let opts = BtOptions {
            mode: DecodeMode::Sampling,
            seed: 5,
            ..Default::default()
        };
        let a = bt_generate(&tgt, &rev, &opts).unwrap();
        assert_eq!(a, bt_generate(&tgt, &rev, &opts).unwrap());
        assert!(a.iter().all(|p| p.provenance == Provenance::BtSampling));
        // per-record seeds: identical inputs do not all get the same sample
        assert!(a.iter().any(|p| p.src != a[0].src));
    }

    #[test]
    fn tel_counts() {
        let m1 = DictTranslator::new(Lexicon::default(), "de");
        let m2 = DictTranslator::new(Lexicon::new([("x", "z", 1.0)]).unwrap(), "de");
        let src = mono(100, "en");
        let out = tel_build(&src, &[&m1, &m2]).unwrap();
        assert_eq!(out.len(), 200);
        let one = tel_build(&src, &[&m1]).unwrap();
        assert!(one
            .iter()
            .zip(&src)
            .all(|(p, s)| &p.src == s && p.provenance == Provenance::Tel));
        let twins = tel_build(&src, &[&m1, &m1]).unwrap();
        assert_eq!(dedup(twins).count(), 100);
        assert!(tel_build(&src, &[]).is_err());
    }
}
