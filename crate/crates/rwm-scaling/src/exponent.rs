//! Exact rational exponents for powers of the dimension.
//!
//! Every asymptotic statement in this crate reduces to comparing exponents of
//! `d`. Those comparisons must distinguish `<` from `==` exactly, so exponents
//! are stored as rationals and never as floats. Configuration files declare
//! them as strings (`"3/4"`, `"-1"`, `"0.75"`) which are parsed exactly.

use num_rational::Rational64;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

/// An exact power-of-`d` exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exponent(Rational64);

impl Exponent {
    pub const ZERO: Exponent = Exponent(Rational64::new_raw(0, 1));

    pub fn new(numer: i64, denom: i64) -> Self {
        Exponent(Rational64::new(numer, denom))
    }

    pub fn from_integer(n: i64) -> Self {
        Exponent(Rational64::from_integer(n))
    }

    pub fn as_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn rational(&self) -> Rational64 {
        self.0
    }

    /// Best rational approximation of `x` with denominator at most `max_den`,
    /// accepted only if it lies within `tol` of `x`. Used when turning fitted
    /// (floating-point) growth exponents back into exact exponents.
    pub fn rationalize(x: f64, max_den: i64, tol: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        let mut best: Option<(f64, Rational64)> = None;
        for den in 1..=max_den {
            let num = (x * den as f64).round() as i64;
            let cand = Rational64::new(num, den);
            let err = (x - *cand.numer() as f64 / *cand.denom() as f64).abs();
            match best {
                Some((e, _)) if e <= err => {}
                _ => best = Some((err, cand)),
            }
        }
        match best {
            Some((err, r)) if err <= tol => Some(Exponent(r)),
            _ => None,
        }
    }
}

impl From<Rational64> for Exponent {
    fn from(r: Rational64) -> Self {
        Exponent(r)
    }
}

impl Add for Exponent {
    type Output = Exponent;
    fn add(self, rhs: Exponent) -> Exponent {
        Exponent(self.0 + rhs.0)
    }
}

impl Sub for Exponent {
    type Output = Exponent;
    fn sub(self, rhs: Exponent) -> Exponent {
        Exponent(self.0 - rhs.0)
    }
}

impl Neg for Exponent {
    type Output = Exponent;
    fn neg(self) -> Exponent {
        Exponent(-self.0)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self.0.denom() == 1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

/// Error produced when an exponent string cannot be parsed exactly.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid exact fraction {input:?}: {reason}")]
pub struct ParseExponentError {
    pub input: String,
    pub reason: String,
}

impl FromStr for Exponent {
    type Err = ParseExponentError;

    /// Accepts `"n"`, `"n/m"` and finite decimal notation (`"0.75"`), all of
    /// which denote exact rationals. Scientific notation and anything else
    /// that would require rounding is rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| ParseExponentError {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let t = s.trim();
        if t.is_empty() {
            return Err(err("empty string"));
        }
        if let Some((num, den)) = t.split_once('/') {
            let n: i64 = num.trim().parse().map_err(|_| err("bad numerator"))?;
            let d: i64 = den.trim().parse().map_err(|_| err("bad denominator"))?;
            if d == 0 {
                return Err(err("zero denominator"));
            }
            return Ok(Exponent(Rational64::new(n, d)));
        }
        if let Some((int_part, frac_part)) = t.split_once('.') {
            if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err("bad decimal digits"));
            }
            if frac_part.len() > 12 {
                return Err(err("too many decimal digits"));
            }
            let negative = int_part.trim_start().starts_with('-');
            let i: i64 = if int_part == "-" || int_part.is_empty() {
                0
            } else {
                int_part.parse().map_err(|_| err("bad integer part"))?
            };
            let scale = 10i64.pow(frac_part.len() as u32);
            let f: i64 = frac_part.parse().map_err(|_| err("bad fraction part"))?;
            let numer = i.abs() * scale + f;
            let signed = if negative || i < 0 { -numer } else { numer };
            return Ok(Exponent(Rational64::new(signed, scale)));
        }
        let n: i64 = t.parse().map_err(|_| err("not an integer or fraction"))?;
        Ok(Exponent(Rational64::from_integer(n)))
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
