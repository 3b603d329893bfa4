//! Exact rationals rendered as `"p/q"` strings.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed rational {input:?}: expected \"p/q\" with q > 0")]
pub struct RatioParseError {
    pub input: String,
}

/// Formats as `p/q` in lowest terms; integers keep the `/1` suffix.
pub fn format_ratio(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Accepts `p/q` (reduced or not) and bare integers `p`.
pub fn parse_ratio(text: &str) -> Result<BigRational, RatioParseError> {
    let err = || RatioParseError {
        input: text.to_string(),
    };
    let trimmed = text.trim();
    let (num, den) = match trimmed.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (trimmed, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| err())?;
    let den: BigInt = den.parse().map_err(|_| err())?;
    if den <= BigInt::zero() {
        return Err(err());
    }
    Ok(BigRational::new(num, den))
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn from_uint(n: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from(n.clone()))
}

/// `base^(-exp)` as an exact rational.
pub fn inverse_power(base: u64, exp: u32) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(base).pow(exp))
}

pub mod serde_ratio {
    use super::{format_ratio, parse_ratio};
    use num_rational::BigRational;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_ratio(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let text = String::deserialize(d)?;
        parse_ratio(&text).map_err(de::Error::custom)
    }
}

pub mod serde_ratio_opt {
    use super::{format_ratio, parse_ratio};
    use num_rational::BigRational;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => s.serialize_some(&format_ratio(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigRational>, D::Error> {
        let text: Option<String> = Option::deserialize(d)?;
        text.map(|t| parse_ratio(&t).map_err(de::Error::custom))
            .transpose()
    }
}

/// Big unsigned integers as JSON numbers when they fit in `u64`, decimal strings otherwise.
pub mod serde_uint {
    use num_bigint::BigUint;
    use num_traits::ToPrimitive;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        match value.to_u64() {
            Some(v) => s.serialize_u64(v),
            None => s.serialize_str(&value.to_str_radix(10)),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(n) => Ok(BigUint::from(n)),
            Repr::Text(t) => t
                .parse()
                .map_err(|_| de::Error::custom(format!("not an unsigned integer: {t:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_in_lowest_terms() {
        assert_eq!(format_ratio(&ratio(6, 4)), "3/2");
        assert_eq!(format_ratio(&ratio(1, 1)), "1/1");
        assert_eq!(format_ratio(&BigRational::zero()), "0/1");
    }

    #[test]
    fn parses_fractions_and_integers() {
        assert_eq!(parse_ratio("3906/1024").unwrap(), ratio(1953, 512));
        assert_eq!(parse_ratio("2").unwrap(), ratio(2, 1));
        assert_eq!(parse_ratio(" -1/3 ").unwrap(), ratio(-1, 3));
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio("1/-2").is_err());
        assert!(parse_ratio("x").is_err());
    }
}
