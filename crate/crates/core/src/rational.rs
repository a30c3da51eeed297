//! Exact fractions and their text forms.

use num_rational::Ratio;
use num_traits::{Signed, Zero};

/// Exact rational used for rates, measured fractions and deltas.
pub type Fraction = Ratio<i128>;

/// Largest number of decimals accepted when parsing or rendering percentages.
pub const MAX_PRECISION: u32 = 12;

/// `numerator / denominator`, or `None` for an empty denominator.
pub fn ratio_of(numerator: u64, denominator: u64) -> Option<Fraction> {
    (denominator != 0).then(|| Fraction::new(numerator as i128, denominator as i128))
}

/// Renders `value` with `precision` decimals, rounding half away from zero
/// (half-up for non-negative values).
pub fn format_fixed(value: Fraction, precision: u32) -> String {
    let precision = precision.min(MAX_PRECISION);
    let scale = 10i128.pow(precision);
    let scaled = value * Fraction::from_integer(scale);
    let magnitude = scaled.abs();
    let half = Fraction::new(1, 2);
    let rounded = (magnitude + half).floor().to_integer();
    let negative = value.is_negative() && rounded != 0;
    let int_part = rounded / scale;
    let frac_part = rounded % scale;
    let sign = if negative { "-" } else { "" };
    if precision == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{frac_part:0width$}", width = precision as usize)
    }
}

/// Renders a fraction as a percentage (value × 100) with `precision` decimals.
pub fn format_percent(value: Fraction, precision: u32) -> String {
    format_fixed(value * Fraction::from_integer(100), precision)
}

/// Exact text form: a finite decimal when one exists, otherwise `n/d`.
pub fn format_exact(value: Fraction) -> String {
    let mut den = *value.denom();
    let mut decimals = 0u32;
    let mut twos = 0u32;
    let mut fives = 0u32;
    while den % 2 == 0 {
        den /= 2;
        twos += 1;
    }
    while den % 5 == 0 {
        den /= 5;
        fives += 1;
    }
    if den == 1 {
        decimals = twos.max(fives);
    }
    if den != 1 || decimals > MAX_PRECISION {
        return format!("{}/{}", value.numer(), value.denom());
    }
    format_fixed(value, decimals)
}

/// `n/d` or `n` form used in machine-readable output.
pub fn to_ratio_string(value: Fraction) -> String {
    if value.denom() == &1 {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn parse_ratio_string(s: &str) -> Result<Fraction, String> {
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: i128 = n.trim().parse().map_err(|_| format!("invalid fraction `{s}`"))?;
    let d: i128 = d.trim().parse().map_err(|_| format!("invalid fraction `{s}`"))?;
    if d.is_zero() {
        return Err(format!("zero denominator in `{s}`"));
    }
    // keeps sign normalization and later ×100 scaling clear of overflow
    const LIMIT: i128 = 1 << 96;
    if n.abs_diff(0) > LIMIT as u128 || d.abs_diff(0) > LIMIT as u128 {
        return Err(format!("fraction `{s}` out of range"));
    }
    Ok(Fraction::new(n, d))
}

pub mod serde_fraction {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Fraction, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_ratio_string(*value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Fraction, D::Error> {
        let s = String::deserialize(d)?;
        parse_ratio_string(&s).map_err(serde::de::Error::custom)
    }
}

pub mod serde_opt_fraction {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<Fraction>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => s.serialize_some(&to_ratio_string(*v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Fraction>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| parse_ratio_string(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}
