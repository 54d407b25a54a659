use super::lm::NgramLm;
use super::Scorer;
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::preprocess::TranslationTable;

/// Noisy-channel style scorer:
/// `Σ_j [ ln max_i t(y_j | x_i ∪ NULL) + ln P_lm(y_j | context) ]`.
#[derive(Debug, Clone)]
pub struct ChannelScorer {
    pub table: TranslationTable,
    pub lm: NgramLm,
}

impl ChannelScorer {
    pub fn new(table: TranslationTable, lm: NgramLm) -> Self {
        ChannelScorer { table, lm }
    }
}

impl Scorer for ChannelScorer {
    fn logprob(&self, src: &Sentence, tgt: &Sentence) -> Result<f64> {
        if tgt.is_empty() {
            return Err(Error::Score("cannot score an empty target".into()));
        }
        let lm = self.lm.token_logprobs(tgt.tokens());
        let src_toks = src.tokens();
        Ok(tgt
            .tokens()
            .iter()
            .zip(lm)
            .map(|(y, lp)| self.table.best_link(y, src_toks).ln() + lp)
            .sum())
    }
}

/// Target-side LM only; the source is ignored.
#[derive(Debug, Clone)]
pub struct LmScorer {
    pub lm: NgramLm,
}

impl LmScorer {
    pub fn new(lm: NgramLm) -> Self {
        LmScorer { lm }
    }
}

impl Scorer for LmScorer {
    fn logprob(&self, _src: &Sentence, tgt: &Sentence) -> Result<f64> {
        if tgt.is_empty() {
            return Err(Error::Score("cannot score an empty target".into()));
        }
        Ok(self.lm.logprob(tgt.tokens()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SentencePair;
    use crate::preprocess::ibm1_train;

    fn setup() -> ChannelScorer {
        let pairs: Vec<SentencePair> = [("a b", "x y"), ("a", "x"), ("b c", "y z"), ("c", "z")]
            .iter()
            .map(|(s, t)| SentencePair::authentic(Sentence::new(s, "en"), Sentence::new(t, "de")))
            .collect();
        let table = ibm1_train(&pairs, 5).unwrap();
        let lm = NgramLm::train(
            &pairs.iter().map(|p| p.tgt.tokens().to_vec()).collect::<Vec<_>>(),
            2,
            0.1,
        )
        .unwrap();
        ChannelScorer::new(table, lm)
    }

    #[test]
    fn matches_formula() {
        let sc = setup();
        let x = Sentence::new("a b", "en");
        let y = Sentence::new("x y", "de");
        let expect = sc.table.best_link("x", x.tokens()).ln()
            + sc.lm.prob(&["<s>"], "x").ln()
            + sc.table.best_link("y", x.tokens()).ln()
            + sc.lm.prob(&["x"], "y").ln();
        assert_eq!(sc.logprob(&x, &y).unwrap(), expect);
    }

    #[test]
    fn training_target_beats_random() {
        let sc = setup();
        let x = Sentence::new("a b", "en");
        let good = sc.logprob(&x, &Sentence::new("x y", "de")).unwrap();
        let bad = sc.logprob(&x, &Sentence::new("z q", "de")).unwrap();
        assert!(good > bad);
        assert_eq!(good, sc.logprob(&x, &Sentence::new("x y", "de")).unwrap());
    }

    #[test]
    fn empty_target() {
        let sc = setup();
        assert!(matches!(
            sc.logprob(&Sentence::new("a", "en"), &Sentence::new("", "de")),
            Err(Error::Score(_))
        ));
    }
}
