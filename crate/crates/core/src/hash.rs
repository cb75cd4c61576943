//! Counter-based keyed hashing: a uniform variate is a pure function of
//! `(seed, key words)`, so no draw order exists.

use crate::site::{Site, MAX_DIM};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct KeyedHasher {
    state: u64,
}

impl KeyedHasher {
    pub(crate) fn new(seed: u64) -> Self {
        KeyedHasher { state: mix64(seed ^ GOLDEN) }
    }

    pub(crate) fn word(mut self, w: u64) -> Self {
        self.state = mix64(self.state.wrapping_add(GOLDEN) ^ w.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        self
    }

    pub(crate) fn site(self, s: &Site) -> Self {
        (0..MAX_DIM).fold(self, |h, i| h.word(s.0[i] as u64))
    }

    pub(crate) fn finish(self) -> u64 {
        mix64(self.state)
    }
}

/// Maps 64 random bits to the open interval `(0, 1)`.
#[inline]
pub(crate) fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Stable digest of a float slice (bit patterns), for report identifiers.
pub fn digest_f64(values: &[f64]) -> u64 {
    values
        .iter()
        .fold(KeyedHasher::new(values.len() as u64), |h, v| h.word(v.to_bits()))
        .finish()
}
