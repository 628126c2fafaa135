//! Canonical message payloads and their bit accounting.
//!
//! A payload is a tuple of bounded integers plus at most one rational. Its
//! encoded length is the sum of the minimal two's-complement widths of the
//! fields plus an 8-bit tag; fixing the encoding here makes the bandwidth
//! accounting reproducible across runs.

use crate::rational::Ratio;
use num_bigint::BigInt;
use num_traits::Signed;
use serde::Serialize;

/// Message kind tags used across node programs. Kept in one place so payload
/// tags never collide between the phases of a mechanism run.
pub mod tag {
    pub const SCORE: u8 = 1;
    pub const COLOR: u8 = 2;
    pub const COLOR_PROPOSAL: u8 = 3;
    pub const COLOR_FINAL: u8 = 4;
    pub const COLOR_PAIR: u8 = 5;
    pub const IN_FAILED_SET: u8 = 6;
    pub const IN_FAIR_SET: u8 = 7;
    pub const PROPOSAL: u8 = 8;
    pub const ACK: u8 = 9;
    pub const BATCH_PROPOSAL: u8 = 10;
    pub const CAPACITY: u8 = 11;
    pub const PING: u8 = 12;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Payload {
    pub tag: u8,
    pub ints: Vec<i64>,
    pub ratio: Option<Ratio>,
}

impl Payload {
    pub fn new(tag: u8) -> Self {
        Payload {
            tag,
            ints: Vec::new(),
            ratio: None,
        }
    }

    pub fn ints(tag: u8, ints: &[i64]) -> Self {
        Payload {
            tag,
            ints: ints.to_vec(),
            ratio: None,
        }
    }

    pub fn with_ratio(tag: u8, ints: &[i64], ratio: Ratio) -> Self {
        Payload {
            tag,
            ints: ints.to_vec(),
            ratio: Some(ratio),
        }
    }

    /// The `i`-th integer field, if present.
    pub fn int(&self, i: usize) -> Option<i64> {
        self.ints.get(i).copied()
    }

    /// Encoded length in bits under the canonical encoding.
    pub fn bits(&self) -> u64 {
        let mut bits = 8;
        for &x in &self.ints {
            bits += width_i64(x);
        }
        if let Some(r) = &self.ratio {
            bits += width_bigint(r.numer()) + width_bigint(r.denom());
        }
        bits
    }
}

/// Minimal two's-complement width of `x`: the smallest `w >= 1` with
/// `-2^(w-1) <= x <= 2^(w-1) - 1`.
pub fn width_i64(x: i64) -> u64 {
    if x >= 0 {
        65 - (x.leading_zeros() as u64)
    } else {
        65 - ((!x).leading_zeros() as u64)
    }
}

/// Same width measure for arbitrary-precision integers.
pub fn width_bigint(x: &BigInt) -> u64 {
    if x.is_negative() {
        let magnitude = -x;
        // -2^k fits in k+1 bits; other negatives need bits(|x|) + 1.
        let pow2 = magnitude.bits() == magnitude.trailing_zeros().unwrap_or(0) + 1;
        if pow2 {
            magnitude.bits()
        } else {
            magnitude.bits() + 1
        }
    } else {
        x.bits() + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_widths() {
        assert_eq!(width_i64(0), 1);
        assert_eq!(width_i64(1), 2);
        assert_eq!(width_i64(-1), 1);
        assert_eq!(width_i64(2), 3);
        assert_eq!(width_i64(3), 3);
        assert_eq!(width_i64(-4), 3);
        assert_eq!(width_i64(127), 8);
        assert_eq!(width_i64(128), 9);
        assert_eq!(width_i64(-128), 8);
        assert_eq!(width_i64(i64::MAX), 64);
        assert_eq!(width_i64(i64::MIN), 64);
    }

    #[test]
    fn bigint_widths_match_i64() {
        for x in [-130i64, -128, -5, -1, 0, 1, 7, 8, 255, 1 << 40] {
            assert_eq!(width_bigint(&BigInt::from(x)), width_i64(x), "x = {x}");
        }
    }

    #[test]
    fn payload_bits_sum_fields() {
        let p = Payload::ints(tag::PROPOSAL, &[3, 1]);
        assert_eq!(p.bits(), 8 + 3 + 2);
        let p = Payload::with_ratio(tag::CAPACITY, &[3], Ratio::new(3, 2));
        assert_eq!(p.bits(), 8 + 3 + 3 + 3);
    }
}
