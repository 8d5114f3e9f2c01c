//! Sparse feature vectors and the hashing used by the task feature templates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sparse real vector of fixed dimension with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFeatures {
    dim: usize,
    pairs: Vec<(usize, f64)>,
}

impl SparseFeatures {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            pairs: Vec::new(),
        }
    }

    pub fn unit(dim: usize, index: usize) -> Result<Self> {
        Self::from_pairs(dim, vec![(index, 1.0)])
    }

    /// Builds a vector from unordered pairs. Duplicate indices are summed and
    /// entries that sum to exactly zero are kept (they still mark the index as
    /// touched for the learner).
    pub fn from_pairs(dim: usize, mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        for &(i, v) in &pairs {
            if i >= dim {
                return Err(Error::DimensionMismatch { index: i, dim });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(v));
            }
        }
        pairs.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        Ok(Self { dim, pairs: merged })
    }

    /// Copies these features into block `block` of a vector `blocks` times as wide.
    pub fn into_block(&self, block: usize, blocks: usize) -> Self {
        debug_assert!(block < blocks);
        Self {
            dim: self.dim * blocks,
            pairs: self
                .pairs
                .iter()
                .map(|&(i, v)| (block * self.dim + i, v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pairs(&self) -> &[(usize, f64)] {
        &self.pairs
    }

    pub fn nnz(&self) -> usize {
        self.pairs.len()
    }

    pub fn squared_norm(&self) -> f64 {
        self.pairs.iter().map(|&(_, v)| v * v).sum()
    }

    /// Dot product with a dense weight vector. Indices past the end of
    /// `weights` contribute zero.
    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.pairs
            .iter()
            .map(|&(i, v)| weights.get(i).copied().unwrap_or(0.0) * v)
            .sum()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Hashes a namespaced string feature into `[0, 2^bits)`.
pub fn hash_feature(namespace: &str, value: &str, bits: u32) -> usize {
    let mut h = fnv1a(namespace.as_bytes());
    h ^= 0xff;
    h = h.wrapping_mul(FNV_PRIME);
    for &b in value.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    (h & ((1u64 << bits) - 1)) as usize
}

/// Mixes a seed with a list of integers. Used to derive fixed pseudo-random
/// choices keyed on a search state.
pub fn mix(seed: u64, keys: &[u64]) -> u64 {
    let mut h = seed ^ FNV_OFFSET;
    for &k in keys {
        for b in k.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    // splitmix64 finalizer to spread the low bits
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_are_sorted_and_merged() {
        let f = SparseFeatures::from_pairs(10, vec![(5, 1.0), (2, 0.5), (5, 2.0)]).unwrap();
        assert_eq!(f.pairs(), &[(2, 0.5), (5, 3.0)]);
    }

    #[test]
    fn out_of_range_index_rejected() {
        assert!(matches!(
            SparseFeatures::unit(3, 3),
            Err(Error::DimensionMismatch { index: 3, dim: 3 })
        ));
    }

    #[test]
    fn non_finite_value_rejected() {
        assert!(SparseFeatures::from_pairs(3, vec![(0, f64::NAN)]).is_err());
    }

    #[test]
    fn block_layout_offsets_indices() {
        let f = SparseFeatures::from_pairs(4, vec![(1, 1.0), (3, 2.0)]).unwrap();
        let b = f.into_block(2, 3);
        assert_eq!(b.dim(), 12);
        assert_eq!(b.pairs(), &[(9, 1.0), (11, 2.0)]);
    }

    #[test]
    fn fnv_known_vector() {
        // published FNV-1a 64 test vector
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a(b""), FNV_OFFSET);
    }

    #[test]
    fn hashed_feature_in_range() {
        for w in ["the", "cat", "", "zzzzzz"] {
            assert!(hash_feature("w", w, 10) < 1024);
        }
        assert_ne!(hash_feature("w", "x", 20), hash_feature("p", "x", 20));
    }
}
