//! Model contracts shared by every strategy, training profiles, and the
//! self-contained reference backend.
//!
//! A backend advertises which of four capabilities it offers. Strategies bind
//! to exactly one capability each, so an external model only has to implement
//! the operations its strategy needs.

mod features;
mod optim;
mod reference;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::strategies::TrainingInstance;
use crate::{Error, Result};

pub use features::{FeatureHasher, SparseFeatures};
pub use optim::Optimizer;
pub use reference::{Gradient, ReferenceBackend, ReferenceConfig, DENSE_BLOCKS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    ClassLogits,
    PairScores,
    Embed,
    Generate,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capability::ClassLogits => "class_logits",
            Capability::PairScores => "pair_scores",
            Capability::Embed => "embed",
            Capability::Generate => "generate",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub class_logits: bool,
    pub pair_scores: bool,
    pub embed: bool,
    pub generate: bool,
}

impl Capabilities {
    pub const ALL: Capabilities = Capabilities {
        class_logits: true,
        pair_scores: true,
        embed: true,
        generate: true,
    };

    pub fn only(capability: Capability) -> Self {
        Capabilities::default().with(capability)
    }

    pub fn with(mut self, capability: Capability) -> Self {
        match capability {
            Capability::ClassLogits => self.class_logits = true,
            Capability::PairScores => self.pair_scores = true,
            Capability::Embed => self.embed = true,
            Capability::Generate => self.generate = true,
        }
        self
    }

    pub fn supports(&self, capability: Capability) -> bool {
        match capability {
            Capability::ClassLogits => self.class_logits,
            Capability::PairScores => self.pair_scores,
            Capability::Embed => self.embed,
            Capability::Generate => self.generate,
        }
    }
}

/// A fixed-dimension vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Embedding { values })
        } else {
            Err(Error::Backend("embedding has non-finite entries".into()))
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `None` when either side has zero norm.
    pub fn cosine(&self, other: &Embedding) -> Option<f64> {
        crate::math::cosine(&self.values, &other.values)
    }
}

/// Two-way entailment decision; the fields sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub entail: f64,
    pub contradict: f64,
}

/// Encoder input for generation: a single text or an ordered pair, fed as
/// (pattern, requirement) by the similarity-token strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextInput<'a> {
    Single(&'a str),
    Pair(&'a str, &'a str),
}

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const SIMILAR_TOKEN: &str = "5";
pub const DISSIMILAR_TOKEN: &str = "1";

/// Closed output vocabulary for generation: BOS, EOS, the two similarity
/// tokens, then every token of every pattern in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn from_patterns<S: AsRef<str>>(patterns: &[S]) -> Self {
        let mut tokens: Vec<String> = [BOS, EOS, DISSIMILAR_TOKEN, SIMILAR_TOKEN]
            .iter()
            .map(|t| t.to_string())
            .collect();
        for pattern in patterns {
            for token in crate::corpus::tokenize(pattern.as_ref()) {
                if !tokens.iter().any(|t| t == token) {
                    tokens.push(token.to_string());
                }
            }
        }
        Vocabulary { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn bos(&self) -> usize {
        0
    }

    pub fn eos(&self) -> usize {
        1
    }

    /// Token ids of `text` followed by EOS.
    pub fn encode_target(&self, text: &str) -> Result<Vec<usize>> {
        let mut ids = crate::corpus::tokenize(text)
            .into_iter()
            .map(|t| {
                self.index(t)
                    .ok_or_else(|| Error::OutOfVocabulary(t.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        ids.push(self.eos());
        Ok(ids)
    }
}

/// Result of greedy decoding. `step_probs[s]` is the full output
/// distribution at step `s`; there is one more step than tokens when decoding
/// stopped on EOS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub tokens: Vec<String>,
    pub step_probs: Vec<Vec<f64>>,
}

impl Generation {
    pub fn token_probability(&self, vocab: &Vocabulary, step: usize, token: &str) -> Result<f64> {
        let index = vocab
            .index(token)
            .ok_or_else(|| Error::OutOfVocabulary(token.to_string()))?;
        let probs = self.step_probs.get(step).ok_or(Error::StepOutOfRange {
            step,
            len: self.step_probs.len(),
        })?;
        Ok(probs[index])
    }
}

fn unsupported<T>(capability: Capability) -> Result<T> {
    Err(Error::Backend(format!(
        "backend does not offer `{capability}`"
    )))
}

/// The capability contract. Implementations override only the operations they
/// advertise in [`Backend::capabilities`].
pub trait Backend {
    fn capabilities(&self) -> Capabilities;

    fn num_classes(&self) -> usize;

    fn vocabulary(&self) -> Option<&Vocabulary> {
        None
    }

    fn embed(&self, _text: &str) -> Result<Embedding> {
        unsupported(Capability::Embed)
    }

    fn class_logits(&self, _text: &str) -> Result<Vec<f64>> {
        unsupported(Capability::ClassLogits)
    }

    fn pair_scores(&self, _premise: &str, _hypothesis: &str) -> Result<PairScores> {
        unsupported(Capability::PairScores)
    }

    /// Greedy argmax decoding over the vocabulary, stopping at EOS or after
    /// `max_len` tokens. Ties go to the lowest vocabulary index.
    fn generate_greedy(&self, _input: TextInput<'_>, _max_len: usize) -> Result<Generation> {
        unsupported(Capability::Generate)
    }

    /// Probability of `token` at decoding `step` given the greedy prefix.
    fn token_probability(&self, input: TextInput<'_>, step: usize, token: &str) -> Result<f64> {
        let vocab = self
            .vocabulary()
            .ok_or(Error::Backend("backend has no vocabulary".into()))?;
        if vocab.index(token).is_none() {
            return Err(Error::OutOfVocabulary(token.to_string()));
        }
        self.generate_greedy(input, step + 1)?
            .token_probability(vocab, step, token)
    }
}

/// A backend whose parameters can be fitted to training instances.
pub trait Trainable: Backend {
    fn train(&mut self, instances: &[TrainingInstance], cfg: &TrainConfig) -> Result<LossTrace>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warmup {
    None,
    LinearFraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub warmup: Warmup,
    #[serde(default)]
    pub warmup_fraction: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub init_seed: u64,
}

fn default_batch_size() -> usize {
    16
}

/// Named profiles: two epochs each, AdamW with linear warmup over the first
/// 10% of steps, or AdaFactor at a constant rate.
pub const PRESETS: [&str; 3] = ["adamw-5e-5", "adamw-2e-5", "adafactor-1e-3"];

impl TrainConfig {
    pub fn preset(name: &str) -> Option<TrainConfig> {
        let adamw = |learning_rate| TrainConfig {
            epochs: 2,
            optimizer: Optimizer::AdamW,
            learning_rate,
            warmup: Warmup::LinearFraction,
            warmup_fraction: 0.1,
            batch_size: default_batch_size(),
            init_seed: 0,
        };
        match name {
            "adamw-5e-5" => Some(adamw(5e-5)),
            "adamw-2e-5" => Some(adamw(2e-5)),
            "adafactor-1e-3" => Some(TrainConfig {
                epochs: 2,
                optimizer: Optimizer::Adafactor,
                learning_rate: 1e-3,
                warmup: Warmup::None,
                warmup_fraction: 0.0,
                batch_size: default_batch_size(),
                init_seed: 0,
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTrainConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!(
                "warmup_fraction must be in [0, 1), got {}",
                self.warmup_fraction
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, instances: usize) -> usize {
        instances.div_ceil(self.batch_size)
    }

    /// Learning rate at 0-based optimizer `step` out of `total_steps`. With
    /// linear warmup the rate ramps over the first
    /// `ceil(warmup_fraction × total_steps)` steps, then stays constant.
    pub fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        if self.warmup == Warmup::LinearFraction {
            let warm = libm::ceil(self.warmup_fraction * total_steps as f64) as usize;
            if step < warm {
                return self.learning_rate * (step + 1) as f64 / warm as f64;
            }
        }
        self.learning_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub points: Vec<LossPoint>,
}

impl LossTrace {
    /// Mean batch loss per epoch.
    pub fn epoch_means(&self) -> Vec<f64> {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for p in &self.points {
            if sums.len() <= p.epoch {
                sums.resize(p.epoch + 1, (0.0, 0));
            }
            sums[p.epoch].0 += p.loss;
            sums[p.epoch].1 += 1;
        }
        sums.into_iter()
            .map(|(s, n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_mirror_the_hyperparameter_table() {
        let lin = TrainConfig::preset("adamw-5e-5").unwrap();
        assert_eq!(
            (lin.epochs, lin.optimizer, lin.learning_rate),
            (2, Optimizer::AdamW, 5e-5)
        );
        assert_eq!(
            (lin.warmup, lin.warmup_fraction),
            (Warmup::LinearFraction, 0.1)
        );
        let siamese = TrainConfig::preset("adamw-2e-5").unwrap();
        assert_eq!(siamese.learning_rate, 2e-5);
        let adafactor = TrainConfig::preset("adafactor-1e-3").unwrap();
        assert_eq!(
            (adafactor.epochs, adafactor.optimizer, adafactor.learning_rate, adafactor.warmup),
            (2, Optimizer::Adafactor, 1e-3, Warmup::None)
        );
        assert!(TrainConfig::preset("sgd").is_none());
        for name in PRESETS {
            TrainConfig::preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn warmup_schedule() {
        let cfg = TrainConfig::preset("adamw-5e-5").unwrap();
        // 95 steps: warmup covers ceil(9.5) = 10 steps.
        for s in 0..10 {
            assert!((cfg.lr_at(s, 95) - 5e-5 * (s + 1) as f64 / 10.0).abs() < 1e-18);
        }
        assert_eq!(cfg.lr_at(10, 95), 5e-5);
        assert_eq!(cfg.lr_at(94, 95), 5e-5);
        let flat = TrainConfig::preset("adafactor-1e-3").unwrap();
        assert_eq!(flat.lr_at(0, 95), 1e-3);
    }

    #[test]
    fn invalid_configs() {
        let base = TrainConfig::preset("adamw-5e-5").unwrap();
        assert!(TrainConfig {
            epochs: 0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            warmup_fraction: 1.0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..base
        }
        .validate()
        .is_err());
    }

    #[test]
    fn vocabulary_covers_patterns_and_similarity_tokens() {
        let patterns = crate::corpus::DEFAULT_PATTERNS;
        let vocab = Vocabulary::from_patterns(&patterns);
        for p in patterns {
            let ids = vocab.encode_target(p).unwrap();
            assert_eq!(*ids.last().unwrap(), vocab.eos());
        }
        assert!(vocab.index("5").is_some() && vocab.index("1").is_some());
        assert_eq!(
            vocab.encode_target("bogus"),
            Err(Error::OutOfVocabulary("bogus".into()))
        );
    }

    #[test]
    fn trace_epoch_means() {
        let trace = LossTrace {
            points: [(0, 2.0), (0, 4.0), (1, 1.0)]
                .iter()
                .enumerate()
                .map(|(step, &(epoch, loss))| LossPoint {
                    step,
                    epoch,
                    lr: 0.1,
                    loss,
                })
                .collect(),
        };
        assert_eq!(trace.epoch_means(), [3.0, 1.0]);
    }
}
