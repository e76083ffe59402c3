//! Exact rational arithmetic helpers.
//!
//! Every score, stake amount, trust weight and threshold in this crate is a
//! [`Rational`] (arbitrary-precision `num_rational::BigRational`). Comparisons
//! against protocol thresholds are therefore exact; floating point is only
//! ever used at the display edge, never in a decision.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// Exact rational number used for all protocol arithmetic.
pub type Rational = BigRational;

/// Shorthand for `n/d` as a [`Rational`].
///
/// Panics if `d == 0`; intended for constants in code and tests.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Shorthand for the integer `n` as a [`Rational`].
pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Error produced when a rational literal cannot be parsed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseRationalError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid rational literal `{0}`")]
    Invalid(String),
    #[error("zero denominator in rational literal `{0}`")]
    ZeroDenominator(String),
}

/// Parses a rational from a string literal.
///
/// Accepted forms, all exact:
///
/// - integers: `"42"`, `"-7"`,
/// - fractions: `"9/10"`, `"-2/3"`,
/// - decimals: `"0.9"` (parsed as 9/10, not as a float), `"-1.25"`.
pub fn parse_rational(s: &str) -> Result<Rational, ParseRationalError> {
    let trimmed = s.trim();
    if trimmed.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    let invalid = || ParseRationalError::Invalid(s.to_string());

    if let Some((num, den)) = trimmed.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| invalid())?;
        let d: BigInt = den.trim().parse().map_err(|_| invalid())?;
        if d.is_zero() {
            return Err(ParseRationalError::ZeroDenominator(s.to_string()));
        }
        return Ok(Rational::new(n, d));
    }

    if let Some((int_part, frac_part)) = trimmed.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(invalid());
        }
        let negative = int_part.starts_with('-');
        let int_digits = int_part.strip_prefix(['-', '+']).unwrap_or(int_part);
        if !int_digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(invalid());
        }
        // "0.9" -> 09 / 10^1; sign applied to the whole value.
        let combined: BigInt = format!("{int_digits}{frac_part}")
            .parse()
            .map_err(|_| invalid())?;
        let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
        let value = Rational::new(combined, scale);
        return Ok(if negative { -value } else { value });
    }

    let n: BigInt = trimmed.parse().map_err(|_| invalid())?;
    Ok(Rational::from_integer(n))
}

/// Formats a rational exactly, in lowest terms: `"3/4"`, `"-1/2"`, `"7"`.
///
/// This is the canonical wire form used in event logs; it round-trips
/// through [`parse_rational`] without loss.
pub fn display_exact(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Formats a rational as a fixed-point decimal with `places` fractional
/// digits, rounding half away from zero.
///
/// Only used for human-facing output (CSV cells, summaries); protocol logic
/// never consumes the rounded form.
pub fn display_decimal(r: &Rational, places: usize) -> String {
    let scale = BigInt::from(10u32).pow(places as u32);
    // round(|r| * scale) with ties away from zero: floor(x + 1/2) on |r|.
    let scaled = r.abs() * Rational::from_integer(scale.clone())
        + Rational::new(BigInt::one(), BigInt::from(2));
    let units = scaled.floor().to_integer();
    let (int_part, frac_part) = units.div_rem(&scale);
    let sign = if r.is_negative() && !(int_part.is_zero() && frac_part.is_zero()) {
        "-"
    } else {
        ""
    };
    if places == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part:0places$}", places = places)
    }
}

/// Serde adaptor serializing a [`Rational`] as its exact string form.
///
/// Use with `#[serde(with = "crate::rational::serde_exact")]`.
pub mod serde_exact {
    use super::{display_exact, parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(value: &Rational, ser: S) -> Result<S::Ok, S::Error> {
        display_exact(value).serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Rational, D::Error> {
        let raw = String::deserialize(de)?;
        parse_rational(&raw).map_err(serde::de::Error::custom)
    }
}
