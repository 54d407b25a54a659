//! Cleaning and filtering of parallel and monolingual corpora.

mod align;
mod dedup;
mod filter;
mod lid;
mod split;
mod text;

pub use align::{
    align_score, ibm1_train, TranslationTable, DEFAULT_ITERATIONS, DEFAULT_THRESHOLD, NULL_TOKEN, PROB_FLOOR,
};
pub use dedup::{dedup, dedup_key, dedup_key_text, dedup_sentences, sentence_key, Deduper};
pub use filter::{
    filter_chain, AlignFilter, FilterChain, FilterConfig, FilterCount, FilterReport, FilterSpec, LidFilter, MaxTokens,
    PairFilter, RatioFilter, RejectedSample, DEFAULT_MAX_TOKENS, DEFAULT_RATIO_HI, DEFAULT_RATIO_LO,
};
pub use lid::{
    char_ngrams, lid_classify, lid_train, LidModel, DEFAULT_K as LID_DEFAULT_K, DEFAULT_ORDER as LID_DEFAULT_ORDER,
    UNSEEN_FLOOR,
};
pub use split::{split_long, split_long_all};
pub use text::{decode_xml_once, normalize_punct, normalize_width, strip_invisible, t2s_convert, T2sMap};

use crate::corpus::{Sentence, SentencePair};

/// Which text transforms apply to which languages.
#[derive(Debug, Clone, Default)]
pub struct Normalizer {
    /// Languages whose punctuation is normalized (e.g. `en`).
    pub punct_langs: Vec<String>,
    pub t2s: Option<T2sMap>,
    /// Languages the traditional-to-simplified table applies to.
    pub t2s_langs: Vec<String>,
}

impl Normalizer {
    pub fn normalize_text(&self, text: &str, lang: &str) -> String {
        let mut t = normalize_width(&strip_invisible(text));
        if self.punct_langs.iter().any(|l| l == lang) {
            t = normalize_punct(&t);
        }
        if let Some(map) = &self.t2s {
            if self.t2s_langs.iter().any(|l| l == lang) {
                t = map.convert(&t);
            }
        }
        t
    }

    pub fn sentence(&self, s: &Sentence) -> Sentence {
        Sentence::new(self.normalize_text(s.text(), s.lang()), s.lang())
    }

    pub fn pair(&self, p: &SentencePair) -> SentencePair {
        SentencePair {
            src: self.sentence(&p.src),
            tgt: self.sentence(&p.tgt),
            provenance: p.provenance,
            scores: p.scores.clone(),
        }
    }
}
