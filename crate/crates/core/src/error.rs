use alloc::string::String;

use crate::backend::Capability;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown label {label:?}; valid labels are {valid}")]
    UnknownLabel { label: String, valid: String },

    #[error("duplicate requirement id {0:?}")]
    DuplicateId(String),

    #[error("invalid pattern set: {0}")]
    InvalidPatterns(String),

    #[error("augmented requirement {id:?} has no matching seed parent {parent:?}")]
    OrphanVariant { id: String, parent: String },

    #[error("class {class} ({text:?}) has {available} seed requirements, fewer than k = {k}")]
    InsufficientClass {
        class: usize,
        text: String,
        available: usize,
        k: usize,
    },

    #[error("k must be at least 1")]
    ZeroShots,

    #[error("augmentation only applies to seed requirements, got {0:?}")]
    NotASeed(String),

    #[error("token position {position} has no thesaurus entry")]
    NoSynonyms { position: usize },

    #[error("token position {position} is out of range for {len} tokens")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("invalid augmentation config: {0}")]
    InvalidAugmentation(String),

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("no training instances")]
    EmptyInstances,

    #[error("strategy `{strategy}` requires the `{capability}` capability, which the backend does not offer")]
    MissingCapability {
        strategy: String,
        capability: Capability,
    },

    #[error("token {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),

    #[error("max_len must be positive")]
    InvalidMaxLen,

    #[error("step {step} is beyond the decoded length {len}")]
    StepOutOfRange { step: usize, len: usize },

    #[error("class index {label} is out of range for {classes} classes")]
    InvalidClass { label: usize, classes: usize },

    #[error("length mismatch: {golds} gold labels vs {preds} predictions")]
    LengthMismatch { golds: usize, preds: usize },

    #[error("cannot compute metrics on an empty confusion matrix")]
    EmptyConfusion,

    #[error("cannot aggregate reports from different strategies ({0:?} and {1:?})")]
    MixedStrategies(String, String),

    #[error("nothing to aggregate")]
    EmptyAggregate,

    #[error("unknown strategy {0:?}; expected one of linear, nli, siamese, s2s_sim, s2s_gen")]
    UnknownStrategy(String),

    #[error("backend error: {0}")]
    Backend(String),
}
