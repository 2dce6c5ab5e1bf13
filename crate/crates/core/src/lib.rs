//! Few-shot classification of requirement sentences into specification
//! pattern classes.
//!
//! The crate covers everything that is pure computation: few-shot sampling
//! over a labeled corpus, thesaurus-driven augmentation, the five task
//! reformulations (linear head, entailment, Siamese similarity, seq2seq
//! similarity token, seq2seq label generation), a small self-contained
//! trainable backend, and the evaluation metrics. File formats, the
//! experiment runner and the CLI live in the `fewshot` crate.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod augmentation;
pub mod backend;
pub mod corpus;
mod error;
mod math;
pub mod metrics;
pub mod strategies;
pub mod synthetic;

pub use error::{Error, Result};
pub use math::{argmax, cosine, softmax};

pub use augmentation::{
    augment, replace_words, AugmentationConfig, AugmentationOutcome, Thesaurus,
};
pub use backend::{
    Backend, Capabilities, Capability, Embedding, Generation, PairScores, TextInput, TrainConfig,
    Trainable, Vocabulary,
};
pub use corpus::{
    class_distribution, normalize, sample_few_shot, tokenize, FewShotSplit, LabeledDataset, Origin,
    PatternClass, Requirement,
};
pub use metrics::{
    aggregate, compute_metrics, confusion, levenshtein, AggregateReport, ConfusionMatrix,
    MetricReport,
};
pub use strategies::{build_instances, predict, Prediction, Strategy, Target, TrainingInstance};
