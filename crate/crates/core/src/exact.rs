//! Exact rational arithmetic helpers.
//!
//! All perception sums are accumulated as rationals; division into a float
//! happens once, at presentation time.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Exact = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a decimal or fraction: {0:?}")]
pub struct ParseExactError(pub String);

pub fn int(value: i64) -> Exact {
    Exact::from_integer(BigInt::from(value))
}

pub fn ratio(numer: i64, denom: i64) -> Exact {
    Exact::new(BigInt::from(numer), BigInt::from(denom))
}

/// Parses plain decimals (`"2"`, `"-0.11"`) and fractions (`"1/3"`). No exponents.
pub fn parse(text: &str) -> Result<Exact, ParseExactError> {
    let err = || ParseExactError(text.to_string());
    let s = text.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Exact::new(n, d));
    }
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(err());
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let digits = format!("{whole}{frac}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().map_err(|_| err())?
    };
    let denom = num_traits::pow(BigInt::from(10), frac.len());
    let value = Exact::new(numer, denom);
    Ok(if negative { -value } else { value })
}

/// Exact value of a finite float, via its shortest round-trip decimal form.
pub fn from_f64_decimal(value: f64) -> Option<Exact> {
    if !value.is_finite() {
        return None;
    }
    parse(&format!("{value}")).ok()
}

pub fn to_f64(value: &Exact) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// Rounds to `places` decimals with ties going to the even neighbour.
/// Returns the scaled integer (value * 10^places, rounded).
pub fn round_scaled(value: &Exact, places: u32) -> BigInt {
    let scale = num_traits::pow(BigInt::from(10), places as usize);
    let scaled = value * Exact::from_integer(scale);
    let floor = scaled.floor();
    let diff = &scaled - &floor;
    let half = ratio(1, 2);
    let base = floor.to_integer();
    if diff > half || (diff == half && base.is_odd()) {
        base + 1
    } else {
        base
    }
}

/// Fixed-point rendering of [`round_scaled`], e.g. `0.125 -> "0.12"`.
pub fn format_fixed(value: &Exact, places: u32) -> String {
    let scaled = round_scaled(value, places);
    format_scaled(&scaled, places)
}

pub(crate) fn format_scaled(scaled: &BigInt, places: u32) -> String {
    let negative = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let places = places as usize;
    let body = if places == 0 {
        digits
    } else {
        let padded = format!("{digits:0>width$}", width = places + 1);
        let (w, f) = padded.split_at(padded.len() - places);
        format!("{w}.{f}")
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

pub fn mean(values: &[Exact]) -> Option<Exact> {
    if values.is_empty() {
        return None;
    }
    let sum: Exact = values.iter().cloned().sum();
    Some(sum / int(values.len() as i64))
}

/// Serde adapter storing an [`Exact`] as a string (`"2"`, `"1/3"`) and
/// accepting either a string or a JSON/TOML number on input.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactValue(pub Exact);

impl fmt::Display for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for ExactValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ExactValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let value = match Repr::deserialize(deserializer)? {
            Repr::Int(i) => int(i),
            Repr::Float(f) => from_f64_decimal(f).ok_or_else(|| serde::de::Error::custom("non-finite number"))?,
            Repr::Text(s) => parse(&s).map_err(serde::de::Error::custom)?,
        };
        Ok(ExactValue(value))
    }
}
