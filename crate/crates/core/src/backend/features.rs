//! Hashed word and character-trigram features.

use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;

use crate::corpus::tokenize;
use crate::math;

/// Sorted `(index, value)` pairs with unit L2 norm, or empty.
pub type SparseFeatures = Vec<(u32, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHasher {
    bits: u32,
}

impl FeatureHasher {
    pub fn new(bits: u32) -> Self {
        assert!((1..=30).contains(&bits), "feature bits must be in 1..=30");
        FeatureHasher { bits }
    }

    pub fn dim(&self) -> usize {
        1 << self.bits
    }

    fn bucket(&self, namespace: u8, parts: &[&[u8]]) -> u32 {
        let mut hasher = FnvHasher::default();
        hasher.write_u8(namespace);
        for part in parts {
            hasher.write(part);
        }
        (hasher.finish() & ((1u64 << self.bits) - 1)) as u32
    }

    /// Presence indicators of word unigrams and boundary-marked character
    /// trigrams, scaled to unit length.
    pub fn features(&self, text: &str) -> SparseFeatures {
        let mut raw: Vec<u32> = Vec::new();
        for word in tokenize(text) {
            raw.push(self.bucket(b'w', &[word.as_bytes()]));
            let mut chars: Vec<char> = Vec::with_capacity(word.len() + 2);
            chars.push('<');
            chars.extend(word.chars());
            chars.push('>');
            let mut buf = [0u8; 12];
            for window in chars.windows(3) {
                let mut len = 0;
                for c in window {
                    len += c.encode_utf8(&mut buf[len..]).len();
                }
                raw.push(self.bucket(b'c', &[&buf[..len]]));
            }
        }
        raw.sort_unstable();
        raw.dedup();
        let value = 1.0 / math::sqrt(raw.len() as f64);
        raw.into_iter().map(|i| (i, value)).collect()
    }
}
