//! Exact rational quantities for loads, capacities and fractional matchings.
//!
//! All matching arithmetic is exact: a [`Ratio`] wraps an arbitrary-precision
//! rational and serializes as the string `"p/q"` (or just `"p"` when the
//! denominator is one). No floating point enters any matching value.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub, SubAssign};
use std::str::FromStr;

/// An exact rational number.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ratio(BigRational);

impl Ratio {
    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Ratio(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn int(value: i64) -> Self {
        Ratio(BigRational::from_integer(BigInt::from(value)))
    }

    pub fn zero() -> Self {
        Ratio(BigRational::zero())
    }

    pub fn one() -> Self {
        Ratio(BigRational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    /// Lossy conversion for reporting only; never used in matching logic.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn recip(&self) -> Ratio {
        assert!(!self.is_zero(), "reciprocal of zero");
        Ratio(self.0.recip())
    }

    /// Exact ceiling, for positive values that fit in a `u64`.
    pub fn ceil_u64(&self) -> u64 {
        assert!(!self.is_negative(), "ceiling of a negative quantity");
        self.0
            .ceil()
            .to_integer()
            .to_u64()
            .expect("ceiling fits in u64")
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Error produced when parsing a `"p/q"` string fails.
#[derive(Debug, thiserror::Error)]
#[error("invalid rational {input:?}: {reason}")]
pub struct ParseRatioError {
    pub input: String,
    pub reason: String,
}

impl FromStr for Ratio {
    type Err = ParseRatioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: &str| ParseRatioError {
            input: s.to_owned(),
            reason: reason.to_owned(),
        };
        let mut parts = s.splitn(2, '/');
        let numer = parts.next().ok_or_else(|| bad("empty"))?;
        let numer: BigInt = numer.trim().parse().map_err(|_| bad("bad numerator"))?;
        let denom = match parts.next() {
            Some(d) => d.trim().parse().map_err(|_| bad("bad denominator"))?,
            None => BigInt::one(),
        };
        if denom.is_zero() {
            return Err(bad("zero denominator"));
        }
        Ok(Ratio(BigRational::new(numer, denom)))
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Add for Ratio {
    type Output = Ratio;
    fn add(self, rhs: Ratio) -> Ratio {
        Ratio(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a Ratio> for Ratio {
    type Output = Ratio;
    fn add(self, rhs: &'a Ratio) -> Ratio {
        Ratio(self.0 + &rhs.0)
    }
}

impl Sub for Ratio {
    type Output = Ratio;
    fn sub(self, rhs: Ratio) -> Ratio {
        Ratio(self.0 - rhs.0)
    }
}

impl<'a> Sub<&'a Ratio> for Ratio {
    type Output = Ratio;
    fn sub(self, rhs: &'a Ratio) -> Ratio {
        Ratio(self.0 - &rhs.0)
    }
}

impl Mul for Ratio {
    type Output = Ratio;
    fn mul(self, rhs: Ratio) -> Ratio {
        Ratio(self.0 * rhs.0)
    }
}

impl AddAssign<&Ratio> for Ratio {
    fn add_assign(&mut self, rhs: &Ratio) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&Ratio> for Ratio {
    fn sub_assign(&mut self, rhs: &Ratio) {
        self.0 -= &rhs.0;
    }
}

impl Sum for Ratio {
    fn sum<I: Iterator<Item = Ratio>>(iter: I) -> Ratio {
        iter.fold(Ratio::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Ratio> for Ratio {
    fn sum<I: Iterator<Item = &'a Ratio>>(iter: I) -> Ratio {
        iter.fold(Ratio::zero(), |acc, x| acc + x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse_round_trip() {
        for s in ["0", "7", "-3", "3/2", "-5/4", "1000000000000000000000/7"] {
            let r: Ratio = s.parse().unwrap();
            assert_eq!(r.to_string(), s);
        }
    }

    #[test]
    fn parse_normalizes() {
        let r: Ratio = "4/2".parse().unwrap();
        assert_eq!(r, Ratio::int(2));
        assert_eq!(r.to_string(), "2");
        let r: Ratio = "2/-4".parse().unwrap();
        assert_eq!(r, Ratio::new(-1, 2));
    }

    #[test]
    fn rejects_zero_denominator() {
        assert!("1/0".parse::<Ratio>().is_err());
        assert!("x".parse::<Ratio>().is_err());
    }

    #[test]
    fn arithmetic_is_exact() {
        let third = Ratio::new(1, 3);
        let sum: Ratio = (0..3).map(|_| third.clone()).sum();
        assert_eq!(sum, Ratio::one());
    }
}
