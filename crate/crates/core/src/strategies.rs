//! The five task reformulations of three-way pattern classification.
//!
//! | name      | training instances per requirement                  | decision rule                      |
//! |-----------|------------------------------------------------------|------------------------------------|
//! | `linear`  | text → class                                         | argmax softmax                     |
//! | `nli`     | (pattern, text) → entail ×1, contradict ×2           | argmax entail probability          |
//! | `siamese` | (pattern, text) → 1 ×1, 0 ×2                         | argmax cosine                      |
//! | `s2s_sim` | (pattern, text) → "5" ×1, "1" ×2                     | unique "5", else min P("1")        |
//! | `s2s_gen` | text → pattern tokens                                | exact match, else min edit distance |
//!
//! Pairwise inputs are always ordered (pattern, requirement). All ties go to
//! the lowest class index.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Capability, TextInput, DISSIMILAR_TOKEN, SIMILAR_TOKEN};
use crate::corpus::{tokenize, PatternClass, Requirement};
use crate::math::{argmax, argmin_by, softmax};
use crate::metrics::levenshtein;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Linear,
    Nli,
    Siamese,
    S2sSim,
    S2sGen,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Linear,
        Strategy::Nli,
        Strategy::Siamese,
        Strategy::S2sSim,
        Strategy::S2sGen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Linear => "linear",
            Strategy::Nli => "nli",
            Strategy::Siamese => "siamese",
            Strategy::S2sSim => "s2s_sim",
            Strategy::S2sGen => "s2s_gen",
        }
    }

    pub fn capability(self) -> Capability {
        self.instance_kind().capability()
    }

    pub fn instance_kind(self) -> InstanceKind {
        match self {
            Strategy::Linear => InstanceKind::Classify,
            Strategy::Nli => InstanceKind::PairNli,
            Strategy::Siamese => InstanceKind::PairSim,
            Strategy::S2sSim => InstanceKind::Seq2SeqSim,
            Strategy::S2sGen => InstanceKind::Seq2SeqGen,
        }
    }

    /// Pairwise strategies emit one instance per (requirement, class).
    pub fn is_pairwise(self) -> bool {
        matches!(self, Strategy::Nli | Strategy::Siamese | Strategy::S2sSim)
    }

    /// Training profile used unless a config overrides it.
    pub fn default_profile(self) -> &'static str {
        match self {
            Strategy::Linear | Strategy::Nli => "adamw-5e-5",
            Strategy::Siamese => "adamw-2e-5",
            Strategy::S2sSim | Strategy::S2sGen => "adafactor-1e-3",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Classify,
    PairNli,
    PairSim,
    Seq2SeqSim,
    Seq2SeqGen,
}

impl InstanceKind {
    pub fn capability(self) -> Capability {
        match self {
            InstanceKind::Classify => Capability::ClassLogits,
            InstanceKind::PairNli => Capability::PairScores,
            InstanceKind::PairSim => Capability::Embed,
            InstanceKind::Seq2SeqSim | InstanceKind::Seq2SeqGen => Capability::Generate,
        }
    }

    pub fn strategy(self) -> Strategy {
        match self {
            InstanceKind::Classify => Strategy::Linear,
            InstanceKind::PairNli => Strategy::Nli,
            InstanceKind::PairSim => Strategy::Siamese,
            InstanceKind::Seq2SeqSim => Strategy::S2sSim,
            InstanceKind::Seq2SeqGen => Strategy::S2sGen,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entailment,
    Contradiction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Class(usize),
    Nli(NliLabel),
    /// 1 for the matching pattern, 0 otherwise.
    Similarity(u8),
    /// `"5"` for the matching pattern, `"1"` otherwise.
    Token(String),
    Sequence(Vec<String>),
}

impl Target {
    /// Whether a pairwise target marks the matching pattern; `None` for
    /// pointwise targets.
    pub fn is_positive(&self) -> Option<bool> {
        match self {
            Target::Nli(label) => Some(*label == NliLabel::Entailment),
            Target::Similarity(bit) => Some(*bit == 1),
            Target::Token(token) => Some(token == SIMILAR_TOKEN),
            Target::Class(_) | Target::Sequence(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub kind: InstanceKind,
    /// Pattern text for pairwise kinds, requirement text otherwise.
    pub input_a: String,
    /// Requirement text for pairwise kinds, empty otherwise.
    pub input_b: String,
    pub target: Target,
}

/// Turns labeled training requirements into strategy-specific instances.
/// Pairwise strategies emit one instance per class for every requirement, in
/// class order.
pub fn build_instances(
    strategy: Strategy,
    train: &[Requirement],
    classes: &[PatternClass],
) -> Result<Vec<TrainingInstance>> {
    if classes.is_empty() {
        return Err(Error::InvalidPatterns("no classes".into()));
    }
    let kind = strategy.instance_kind();
    let per_req = if strategy.is_pairwise() {
        classes.len()
    } else {
        1
    };
    let mut out = Vec::with_capacity(train.len() * per_req);
    for req in train {
        if req.label >= classes.len() {
            return Err(Error::InvalidClass {
                label: req.label,
                classes: classes.len(),
            });
        }
        if !strategy.is_pairwise() {
            let target = match strategy {
                Strategy::Linear => Target::Class(req.label),
                _ => Target::Sequence(
                    tokenize(&classes[req.label].text)
                        .into_iter()
                        .map(String::from)
                        .collect(),
                ),
            };
            out.push(TrainingInstance {
                kind,
                input_a: req.text.clone(),
                input_b: String::new(),
                target,
            });
            continue;
        }
        for class in classes {
            let positive = class.index == req.label;
            let target = match strategy {
                Strategy::Nli => Target::Nli(if positive {
                    NliLabel::Entailment
                } else {
                    NliLabel::Contradiction
                }),
                Strategy::Siamese => Target::Similarity(u8::from(positive)),
                _ => Target::Token(
                    if positive {
                        SIMILAR_TOKEN
                    } else {
                        DISSIMILAR_TOKEN
                    }
                    .to_string(),
                ),
            };
            out.push(TrainingInstance {
                kind,
                input_a: class.text.clone(),
                input_b: req.text.clone(),
                target,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub predicted_class: usize,
    pub scores: Vec<f64>,
    pub fallback_used: bool,
    /// Decoded tokens for `s2s_gen`; the first decoded token per class for
    /// `s2s_sim`; empty otherwise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_output: Vec<String>,
}

/// Which classes the min-P("1") fallback of `s2s_sim` ranges over when more
/// than one class decoded "5".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackScope {
    /// Only the classes that produced "5".
    #[default]
    Restricted,
    AllClasses,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictOptions {
    #[serde(default)]
    pub fallback_scope: FallbackScope,
}

fn require(backend: &dyn Backend, strategy: Strategy) -> Result<()> {
    let capability = strategy.capability();
    if backend.capabilities().supports(capability) {
        Ok(())
    } else {
        Err(Error::MissingCapability {
            strategy: strategy.name().to_string(),
            capability,
        })
    }
}

/// Decoding budget for generative strategies: longest pattern plus two.
pub fn generation_budget(classes: &[PatternClass]) -> usize {
    classes
        .iter()
        .map(|c| tokenize(&c.text).len())
        .max()
        .unwrap_or(0)
        + 2
}

pub fn predict(
    strategy: Strategy,
    backend: &dyn Backend,
    text: &str,
    classes: &[PatternClass],
    options: &PredictOptions,
) -> Result<Prediction> {
    match strategy {
        Strategy::Linear => predict_linear(backend, text, classes),
        Strategy::Nli => predict_nli(backend, text, classes),
        Strategy::Siamese => predict_siamese(backend, text, classes),
        Strategy::S2sSim => predict_s2s_sim(backend, text, classes, options.fallback_scope),
        Strategy::S2sGen => predict_s2s_gen(backend, text, classes),
    }
}

fn argmax_prediction(scores: Vec<f64>) -> Prediction {
    Prediction {
        predicted_class: argmax(&scores),
        scores,
        fallback_used: false,
        raw_output: Vec::new(),
    }
}

pub fn predict_linear(
    backend: &dyn Backend,
    text: &str,
    classes: &[PatternClass],
) -> Result<Prediction> {
    require(backend, Strategy::Linear)?;
    let logits = backend.class_logits(text)?;
    if logits.len() != classes.len() {
        return Err(Error::Backend(alloc::format!(
            "{} logits for {} classes",
            logits.len(),
            classes.len()
        )));
    }
    Ok(argmax_prediction(softmax(&logits)))
}

pub fn predict_nli(
    backend: &dyn Backend,
    text: &str,
    classes: &[PatternClass],
) -> Result<Prediction> {
    require(backend, Strategy::Nli)?;
    let scores = classes
        .iter()
        .map(|c| backend.pair_scores(&c.text, text).map(|s| s.entail))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax_prediction(scores))
}

/// A zero-norm embedding on either side scores −1 for that class.
pub fn predict_siamese(
    backend: &dyn Backend,
    text: &str,
    classes: &[PatternClass],
) -> Result<Prediction> {
    require(backend, Strategy::Siamese)?;
    let req = backend.embed(text)?;
    let scores = classes
        .iter()
        .map(|c| Ok(backend.embed(&c.text)?.cosine(&req).unwrap_or(-1.0)))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax_prediction(scores))
}

/// Picks the single class whose (pattern, text) input decodes to "5" first.
/// Otherwise the class with the smallest step-0 probability of "1" wins,
/// among the "5" producers when there are several (per `scope`) and among
/// all classes when there are none.
pub fn predict_s2s_sim(
    backend: &dyn Backend,
    text: &str,
    classes: &[PatternClass],
    scope: FallbackScope,
) -> Result<Prediction> {
    require(backend, Strategy::S2sSim)?;
    let budget = generation_budget(classes);
    let mut first_tokens = Vec::with_capacity(classes.len());
    let mut p_dissimilar = Vec::with_capacity(classes.len());
    for class in classes {
        let input = TextInput::Pair(&class.text, text);
        let generation = backend.generate_greedy(input, budget)?;
        first_tokens.push(generation.tokens.first().cloned().unwrap_or_default());
        p_dissimilar.push(backend.token_probability(input, 0, DISSIMILAR_TOKEN)?);
    }
    let winners: Vec<usize> = (0..classes.len())
        .filter(|&c| first_tokens[c] == SIMILAR_TOKEN)
        .collect();
    let scores: Vec<f64> = p_dissimilar.iter().map(|p| 1.0 - p).collect();
    let (predicted_class, fallback_used) = if winners.len() == 1 {
        (winners[0], false)
    } else {
        let candidates: Vec<usize> = if winners.len() > 1 && scope == FallbackScope::Restricted {
            winners
        } else {
            (0..classes.len()).collect()
        };
        let best = argmin_by(candidates.into_iter().map(|c| (c, p_dissimilar[c]))).unwrap_or(0);
        (best, true)
    };
    Ok(Prediction {
        predicted_class,
        scores,
        fallback_used,
        raw_output: first_tokens,
    })
}

/// Decodes the pattern text from the requirement. An exact token match picks
/// that class; otherwise the class at the smallest token-level edit distance.
pub fn predict_s2s_gen(
    backend: &dyn Backend,
    text: &str,
    classes: &[PatternClass],
) -> Result<Prediction> {
    require(backend, Strategy::S2sGen)?;
    let generation =
        backend.generate_greedy(TextInput::Single(text), generation_budget(classes))?;
    let decoded: Vec<&str> = generation.tokens.iter().map(String::as_str).collect();
    let distances: Vec<usize> = classes
        .iter()
        .map(|c| levenshtein(&decoded, &tokenize(&c.text)))
        .collect();
    let best = argmin_by(distances.iter().enumerate().map(|(c, &d)| (c, d as f64))).unwrap_or(0);
    Ok(Prediction {
        predicted_class: best,
        scores: distances.iter().map(|&d| -(d as f64)).collect(),
        fallback_used: distances[best] != 0,
        raw_output: generation.tokens,
    })
}
