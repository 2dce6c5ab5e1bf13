//! Labeled requirement corpora, text normalization and nested few-shot
//! splitting.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The three pattern sentences used throughout, already normalized.
pub const DEFAULT_PATTERNS: [&str; 3] = [
    "it is always the case that expr holds",
    "it is always the case that if expr holds, then expr holds as well",
    "it is always the case that if expr holds, then expr holds after at most duration",
];

/// Lowercases every cased character, collapses whitespace runs to a single
/// space and trims both ends.
pub fn normalize(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for word in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Splits normalized text into tokens.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// A label category. Its text is the anchor sentence for pairwise strategies
/// and the generation target for label generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternClass {
    pub index: usize,
    pub text: String,
}

impl PatternClass {
    /// Builds the class list from pattern sentences, in order.
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Result<Vec<PatternClass>> {
        if texts.is_empty() {
            return Err(Error::InvalidPatterns("no patterns given".into()));
        }
        let mut seen = BTreeSet::new();
        let mut classes = Vec::with_capacity(texts.len());
        for (index, raw) in texts.iter().enumerate() {
            let text = normalize(raw.as_ref());
            if text.is_empty() {
                return Err(Error::InvalidPatterns(format!("pattern {index} is empty")));
            }
            if !seen.insert(text.clone()) {
                return Err(Error::InvalidPatterns(format!(
                    "pattern {index} duplicates {text:?}"
                )));
            }
            classes.push(PatternClass { index, text });
        }
        Ok(classes)
    }

    pub fn defaults() -> Vec<PatternClass> {
        Self::from_texts(&DEFAULT_PATTERNS).expect("default patterns are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Seed,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub text: String,
    pub label: usize,
    pub origin: Origin,
    /// Source seed id for augmented variants; empty for seeds.
    #[serde(default)]
    pub parent_id: String,
}

impl Requirement {
    pub fn seed(id: impl Into<String>, text: &str, label: usize) -> Self {
        Requirement {
            id: id.into(),
            text: normalize(text),
            label,
            origin: Origin::Seed,
            parent_id: String::new(),
        }
    }

    pub fn is_seed(&self) -> bool {
        self.origin == Origin::Seed
    }
}

/// A raw label as found in a dataset file: either a class index or the
/// pattern sentence itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelRef<'a> {
    Index(i64),
    Text(&'a str),
}

/// Resolves a raw label against the class list.
pub fn resolve_label(classes: &[PatternClass], label: LabelRef<'_>) -> Result<usize> {
    let found = match label {
        LabelRef::Index(i) => usize::try_from(i).ok().filter(|&i| i < classes.len()),
        LabelRef::Text(text) => {
            let text = normalize(text);
            classes.iter().position(|c| c.text == text)
        }
    };
    found.ok_or_else(|| Error::UnknownLabel {
        label: match label {
            LabelRef::Index(i) => i.to_string(),
            LabelRef::Text(t) => t.to_string(),
        },
        valid: valid_labels(classes),
    })
}

fn valid_labels(classes: &[PatternClass]) -> String {
    let mut out = String::new();
    for class in classes {
        if !out.is_empty() {
            out.push_str(", ");
        }
        out.push_str(&format!("{} ({:?})", class.index, class.text));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    requirements: Vec<Requirement>,
    classes: Vec<PatternClass>,
}

impl LabeledDataset {
    /// Validates labels, id uniqueness and variant parentage, and normalizes
    /// every text.
    pub fn new(classes: Vec<PatternClass>, mut requirements: Vec<Requirement>) -> Result<Self> {
        for (i, class) in classes.iter().enumerate() {
            if class.index != i {
                return Err(Error::InvalidPatterns(format!(
                    "class indices must be contiguous from 0, found {} at position {i}",
                    class.index
                )));
            }
        }
        let mut seeds: BTreeMap<&str, usize> = BTreeMap::new();
        let mut ids = BTreeSet::new();
        for req in &mut requirements {
            req.text = normalize(&req.text);
        }
        for req in &requirements {
            if req.label >= classes.len() {
                return Err(Error::UnknownLabel {
                    label: req.label.to_string(),
                    valid: valid_labels(&classes),
                });
            }
            if !ids.insert(req.id.as_str()) {
                return Err(Error::DuplicateId(req.id.clone()));
            }
            if req.is_seed() {
                seeds.insert(&req.id, req.label);
            }
        }
        for req in requirements.iter().filter(|r| !r.is_seed()) {
            if seeds.get(req.parent_id.as_str()) != Some(&req.label) {
                return Err(Error::OrphanVariant {
                    id: req.id.clone(),
                    parent: req.parent_id.clone(),
                });
            }
        }
        Ok(LabeledDataset {
            requirements,
            classes,
        })
    }

    pub fn requirements(&self) -> &[Requirement] {
        &self.requirements
    }

    pub fn classes(&self) -> &[PatternClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.requirements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requirements.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Requirement> {
        self.requirements.iter().find(|r| r.id == id)
    }

    /// Looks up many ids at once, preserving the order of `ids`.
    pub fn select<I>(&self, ids: I) -> Vec<&Requirement>
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        let index: BTreeMap<&str, &Requirement> = self
            .requirements
            .iter()
            .map(|r| (r.id.as_str(), r))
            .collect();
        ids.into_iter()
            .filter_map(|id| index.get(id.as_ref()).copied())
            .collect()
    }
}

/// Requirement count per class index, in class order.
pub fn class_distribution(dataset: &LabeledDataset) -> Vec<usize> {
    let mut counts = alloc::vec![0; dataset.classes.len()];
    for req in &dataset.requirements {
        counts[req.label] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSplit {
    pub rng_seed: u64,
    pub k: usize,
    /// Training seed ids, one list per class in class order.
    pub train_ids: Vec<Vec<String>>,
    /// Every seed requirement not selected for training, in dataset order.
    pub test_ids: Vec<String>,
}

impl FewShotSplit {
    pub fn train_len(&self) -> usize {
        self.train_ids.iter().map(Vec::len).sum()
    }

    pub fn all_train_ids(&self) -> impl Iterator<Item = &str> {
        self.train_ids.iter().flatten().map(String::as_str)
    }
}

/// Draws `k` seed requirements per class for training; the rest of the seeds
/// form the test set.
///
/// Each class's seeds are permuted once with a generator seeded by `rng_seed`
/// and the first `k` are taken, so for a fixed seed a smaller `k` always
/// selects a prefix of a larger one. Augmented records are never sampled and
/// never enter the test set.
pub fn sample_few_shot(dataset: &LabeledDataset, k: usize, rng_seed: u64) -> Result<FewShotSplit> {
    if k == 0 {
        return Err(Error::ZeroShots);
    }
    let mut per_class: Vec<Vec<&str>> = alloc::vec![Vec::new(); dataset.classes.len()];
    for req in dataset.requirements.iter().filter(|r| r.is_seed()) {
        per_class[req.label].push(&req.id);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut train_ids = Vec::with_capacity(per_class.len());
    let mut selected = BTreeSet::new();
    for (class, ids) in per_class.iter_mut().enumerate() {
        if ids.len() < k {
            return Err(Error::InsufficientClass {
                class,
                text: dataset.classes[class].text.clone(),
                available: ids.len(),
                k,
            });
        }
        ids.shuffle(&mut rng);
        let chosen: Vec<String> = ids[..k].iter().map(|id| id.to_string()).collect();
        selected.extend(ids[..k].iter().copied());
        train_ids.push(chosen);
    }

    let test_ids = dataset
        .requirements
        .iter()
        .filter(|r| r.is_seed() && !selected.contains(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();

    Ok(FewShotSplit {
        rng_seed,
        k,
        train_ids,
        test_ids,
    })
}
