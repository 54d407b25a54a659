//! Corpus engineering for machine translation: cleaning and filtering,
//! joint BPE, synthetic-data augmentation, curriculum sampling and
//! post-editing dataset construction.

pub mod augment;
pub mod corpus;
pub mod curriculum;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod seed;
pub mod subword;
pub mod translator;

pub use corpus::{NBestList, Provenance, Sentence, SentencePair};
pub use error::{Error, Result};
