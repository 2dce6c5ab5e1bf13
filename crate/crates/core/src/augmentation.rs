//! Synonym-replacement augmentation of seed requirements.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, tokenize, Origin, Requirement};
use crate::{Error, Result};

/// Token → synonyms. Keys and synonyms are normalized, no list contains its
/// own headword and no list is empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thesaurus {
    entries: BTreeMap<String, Vec<String>>,
}

impl Thesaurus {
    pub fn from_entries<I, K, V, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (key, synonyms) in entries {
            let key = normalize(key.as_ref());
            if key.is_empty() {
                continue;
            }
            let list = out.entry(key.clone()).or_default();
            for syn in synonyms {
                let syn = normalize(syn.as_ref());
                if !syn.is_empty() && syn != key && !list.contains(&syn) {
                    list.push(syn);
                }
            }
        }
        out.retain(|_, list| !list.is_empty());
        Thesaurus { entries: out }
    }

    pub fn synonyms(&self, token: &str) -> Option<&[String]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub variants_per_sample: usize,
    pub replace_fraction: f64,
    pub max_attempts_factor: usize,
    pub rng_seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            variants_per_sample: 50,
            replace_fraction: 0.3,
            max_attempts_factor: 20,
            rng_seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.replace_fraction > 0.0 && self.replace_fraction <= 1.0) {
            return Err(Error::InvalidAugmentation(format!(
                "replace_fraction must be in (0, 1], got {}",
                self.replace_fraction
            )));
        }
        if self.max_attempts_factor == 0 {
            return Err(Error::InvalidAugmentation(
                "max_attempts_factor must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of positions to replace in a sentence of `token_count` tokens:
    /// `max(1, round(fraction × n))`, rounding halves up.
    pub fn replace_count(&self, token_count: usize) -> usize {
        let raw = libm::floor(self.replace_fraction * token_count as f64 + 0.5) as usize;
        raw.max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationOutcome {
    pub variants: Vec<Requirement>,
    pub requested: usize,
    /// How many requested variants could not be produced.
    pub shortfall: usize,
}

/// Per-requirement generator seed, so requirements can be augmented in any
/// order or in parallel with identical results.
pub fn sub_seed(rng_seed: u64, id: &str) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(&rng_seed.to_le_bytes());
    hasher.write(id.as_bytes());
    hasher.finish()
}

/// Produces up to `cfg.variants_per_sample` unique variants of a seed
/// requirement by synonym replacement.
///
/// Only tokens with a thesaurus entry are eligible. Each draw picks
/// `replace_count` eligible positions (or all of them, if fewer exist)
/// uniformly without replacement. Draws stop once enough unique variants are
/// found or the attempt budget `variants_per_sample × max_attempts_factor`
/// is spent.
pub fn augment(
    req: &Requirement,
    thesaurus: &Thesaurus,
    cfg: &AugmentationConfig,
) -> Result<AugmentationOutcome> {
    if !req.is_seed() {
        return Err(Error::NotASeed(req.id.clone()));
    }
    cfg.validate()?;
    let requested = cfg.variants_per_sample;
    let tokens = tokenize(&req.text);
    let eligible: Vec<usize> = (0..tokens.len())
        .filter(|&i| thesaurus.synonyms(tokens[i]).is_some())
        .collect();
    if eligible.is_empty() || requested == 0 {
        return Ok(AugmentationOutcome {
            variants: Vec::new(),
            requested,
            shortfall: requested,
        });
    }

    let m = cfg.replace_count(tokens.len()).min(eligible.len());
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.rng_seed, &req.id));
    let mut seen = BTreeSet::new();
    seen.insert(req.text.clone());
    let mut variants = Vec::with_capacity(requested);
    let budget = requested.saturating_mul(cfg.max_attempts_factor);

    for _ in 0..budget {
        if variants.len() == requested {
            break;
        }
        let positions: Vec<usize> = rand::seq::index::sample(&mut rng, eligible.len(), m)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        let text = replace_words(&tokens, &positions, thesaurus, &mut rng)?.join(" ");
        if seen.insert(text.clone()) {
            variants.push(Requirement {
                id: format!("{}#aug{}", req.id, variants.len() + 1),
                text,
                label: req.label,
                origin: Origin::Augmented,
                parent_id: req.id.clone(),
            });
        }
    }

    let shortfall = requested - variants.len();
    Ok(AugmentationOutcome {
        variants,
        requested,
        shortfall,
    })
}

/// Replaces the tokens at `positions` with a uniformly drawn synonym each.
/// Multiword synonyms expand in place. Positions are treated as a set and
/// draws happen in token order.
pub fn replace_words<R: Rng + ?Sized>(
    tokens: &[&str],
    positions: &[usize],
    thesaurus: &Thesaurus,
    rng: &mut R,
) -> Result<Vec<String>> {
    for &position in positions {
        if position >= tokens.len() {
            return Err(Error::PositionOutOfRange {
                position,
                len: tokens.len(),
            });
        }
        if thesaurus.synonyms(tokens[position]).is_none() {
            return Err(Error::NoSynonyms { position });
        }
    }
    let mut out = Vec::with_capacity(tokens.len() + positions.len());
    for (i, token) in tokens.iter().enumerate() {
        match thesaurus.synonyms(token).filter(|_| positions.contains(&i)) {
            Some(synonyms) => {
                let pick = &synonyms[rng.random_range(0..synonyms.len())];
                out.extend(pick.split(' ').map(String::from));
            }
            None => out.push(String::from(*token)),
        }
    }
    Ok(out)
}
