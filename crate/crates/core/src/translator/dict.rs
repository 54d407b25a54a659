use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use super::{DecodeMode, DecodeSpec, Translator};
use crate::corpus::{NBestList, Sentence, Tokenizer};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};

/// Word-level translation options: source token → (target token, prob),
/// each row sorted by descending probability and summing to 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lexicon {
    rows: BTreeMap<String, Vec<(String, f64)>>,
}

const ROW_SUM_TOLERANCE: f64 = 1e-9;

impl Lexicon {
    /// Builds a lexicon; duplicate targets within a row are merged.
    pub fn new<I, S, T>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T, f64)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut acc: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (s, t, p) in entries {
            let (s, t) = (s.into(), t.into());
            if s.is_empty() || t.is_empty() || s.contains(char::is_whitespace) || t.contains(char::is_whitespace) {
                return Err(Error::config(format!(
                    "lexicon entry `{s}` -> `{t}` is not a single token"
                )));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::config(format!(
                    "lexicon probability {p} for `{s}` -> `{t}` outside (0, 1]"
                )));
            }
            *acc.entry(s).or_default().entry(t).or_default() += p;
        }
        let mut rows = BTreeMap::new();
        for (s, targets) in acc {
            let sum: f64 = targets.values().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::config(format!("lexicon row `{s}` sums to {sum}, expected 1")));
            }
            let mut row: Vec<(String, f64)> = targets.into_iter().collect();
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            rows.insert(s, row);
        }
        Ok(Lexicon { rows })
    }

    /// Parses "src\ttgt\tprob" lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::config(format!("lexicon line {}: expected 3 columns", i + 1)));
            }
            let p: f64 = cols[2]
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("lexicon line {}: bad probability `{}`", i + 1, cols[2])))?;
            entries.push((cols[0].to_string(), cols[1].to_string(), p));
        }
        Lexicon::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (s, row) in &self.rows {
            for (t, p) in row {
                out.push_str(&format!("{s}\t{t}\t{p}\n"));
            }
        }
        out
    }

    /// Options for a source token; OOV tokens copy through with prob 1.
    pub fn options<'a>(&'a self, token: &'a str) -> Vec<(&'a str, f64)> {
        match self.rows.get(token) {
            Some(row) => row.iter().map(|(t, p)| (t.as_str(), *p)).collect(),
            None => vec![(token, 1.0)],
        }
    }

    /// Identity lexicon over the given tokens.
    pub fn identity<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let rows = tokens
            .into_iter()
            .map(|t| {
                let t = t.into();
                (t.clone(), vec![(t, 1.0)])
            })
            .collect();
        Lexicon { rows }
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.rows.iter().map(|(s, r)| (s.as_str(), r.as_slice()))
    }
}

/// Word-by-word translator over a [`Lexicon`] (no reordering).
#[derive(Debug, Clone)]
pub struct DictTranslator {
    lexicon: Lexicon,
    target_lang: String,
}

impl DictTranslator {
    pub fn new(lexicon: Lexicon, target_lang: impl Into<String>) -> Self {
        DictTranslator {
            lexicon,
            target_lang: target_lang.into(),
        }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    fn join(&self, tokens: &[&str]) -> String {
        Tokenizer::for_lang(&self.target_lang).join(tokens)
    }

    // Top-`width` sequences by summed log-probability. Positions are
    // independent, so pruning to `width` after each position is exact.
    fn beam(&self, source: &Sentence, width: usize) -> Vec<(String, f64)> {
        let mut beam: Vec<(Vec<&str>, f64)> = vec![(Vec::new(), 0.0)];
        for tok in source.tokens() {
            let opts = self.lexicon.options(tok);
            let mut next: Vec<(Vec<&str>, f64)> = Vec::with_capacity(beam.len() * opts.len());
            for (prefix, lp) in &beam {
                for &(t, p) in &opts {
                    let mut seq = prefix.clone();
                    seq.push(t);
                    next.push((seq, lp + p.ln()));
                }
            }
            next.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            next.truncate(width);
            beam = next;
        }
        beam.into_iter().map(|(seq, lp)| (self.join(&seq), lp)).collect()
    }

    fn sample(&self, source: &Sentence, spec: &DecodeSpec) -> Vec<(String, f64)> {
        let mut rng = rng_from(derive_seed(spec.seed, source.text().as_bytes()));
        let inv_t = 1.0 / spec.temperature;
        (0..spec.width)
            .map(|_| {
                let mut seq = Vec::with_capacity(source.len());
                let mut lp = 0.0;
                for tok in source.tokens() {
                    let opts = self.lexicon.options(tok);
                    let weights: Vec<f64> = opts.iter().map(|(_, p)| p.powf(inv_t)).collect();
                    let total: f64 = weights.iter().sum();
                    let u: f64 = rng.gen::<f64>() * total;
                    let mut acc = 0.0;
                    let mut pick = opts.len() - 1;
                    for (i, w) in weights.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    seq.push(opts[pick].0);
                    lp += opts[pick].1.ln();
                }
                (self.join(&seq), lp)
            })
            .collect()
    }
}

impl Translator for DictTranslator {
    fn translate(&self, source: &Sentence, spec: &DecodeSpec, n: usize) -> Result<NBestList> {
        if n < 1 {
            return Err(Error::config("n-best size must be >= 1"));
        }
        spec.validate()?;
        let scored = match spec.mode {
            DecodeMode::Beam => self.beam(source, spec.width),
            DecodeMode::Sampling => self.sample(source, spec),
        };
        Ok(NBestList::from_scored(source.clone(), scored, n.min(spec.width)))
    }

    fn target_lang(&self) -> &str {
        &self.target_lang
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(entries: &[(&str, &str, f64)]) -> Lexicon {
        Lexicon::new(entries.iter().map(|&(s, t, p)| (s, t, p))).unwrap()
    }

    #[test]
    fn certain_chain() {
        let tr = DictTranslator::new(lex(&[("a", "x", 1.0)]), "en");
        let nb = tr
            .translate(&Sentence::new("a a", "en"), &DecodeSpec::beam(1), 1)
            .unwrap();
        assert_eq!(nb.hypotheses[0].text, "x x");
        assert_eq!(nb.hypotheses[0].logprob, 0.0);
    }

    #[test]
    fn two_best() {
        let tr = DictTranslator::new(lex(&[("a", "x", 0.9), ("a", "y", 0.1)]), "en");
        let nb = tr
            .translate(&Sentence::new("a", "en"), &DecodeSpec::beam(2), 2)
            .unwrap();
        let got: Vec<_> = nb.hypotheses.iter().map(|h| (h.text.as_str(), h.logprob)).collect();
        assert_eq!(got, vec![("x", 0.9f64.ln()), ("y", 0.1f64.ln())]);
    }

    #[test]
    fn sampling_is_seeded() {
        let tr = DictTranslator::new(lex(&[("a", "x", 0.5), ("a", "y", 0.5), ("b", "z", 1.0)]), "en");
        let src = Sentence::new("a b a a b a", "en");
        let spec = DecodeSpec::sampling(5, 42);
        let a = tr.translate(&src, &spec, 5).unwrap();
        let b = tr.translate(&src, &spec, 5).unwrap();
        assert_eq!(a, b);
        a.validate(5).unwrap();
    }

    #[test]
    fn oov_copies_through() {
        let tr = DictTranslator::new(Lexicon::default(), "en");
        let best = tr
            .one_best(&Sentence::new("foo bar", "en"), &DecodeSpec::beam(1))
            .unwrap();
        assert_eq!(best.text(), "foo bar");
    }

    #[test]
    fn cjk_targets_joined_without_spaces() {
        let tr = DictTranslator::new(lex(&[("you", "你", 1.0), ("good", "好", 1.0)]), "zh");
        let best = tr
            .one_best(&Sentence::new("you good", "en"), &DecodeSpec::beam(1))
            .unwrap();
        assert_eq!(best.text(), "你好");
        assert_eq!(best.len(), 2);
    }

    #[test]
    fn invalid_requests() {
        let tr = DictTranslator::new(Lexicon::default(), "en");
        let s = Sentence::new("a", "en");
        assert!(tr.translate(&s, &DecodeSpec::beam(1), 0).is_err());
        assert!(tr.translate(&s, &DecodeSpec::beam(0), 1).is_err());
        assert!(tr
            .translate(&s, &DecodeSpec::sampling(1, 0).with_temperature(0.0), 1)
            .is_err());
    }

    #[test]
    fn lexicon_validation() {
        assert!(Lexicon::parse("a\tx\t0.5\n").is_err());
        assert!(Lexicon::parse("a\tx\n").is_err());
        let l = Lexicon::parse("a\tx\t0.5\na\ty\t0.5\n").unwrap();
        assert_eq!(Lexicon::parse(&l.to_file_string()).unwrap(), l);
    }
}
