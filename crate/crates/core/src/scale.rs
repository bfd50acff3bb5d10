// SPDX-License-Identifier: MIT OR Apache-2.0

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LabError, Result};

/// A finite, signed steering scale. Totally ordered so it can key maps;
/// negative zero is normalised to zero.
#[derive(Clone, Copy, Debug)]
pub struct Scale(f64);

impl Scale {
    pub const ZERO: Scale = Scale(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(LabError::Invalid(format!("scale must be finite, got {value}")));
        }
        Ok(Scale(if value == 0.0 { 0.0 } else { value }))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }
}

impl PartialEq for Scale {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scale {}

impl PartialOrd for Scale {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scale {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl std::hash::Hash for Scale {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_number(self.0))
    }
}

impl FromStr for Scale {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| LabError::Invalid(format!("not a scale: {s:?}")))?;
        Scale::new(v)
    }
}

impl Serialize for Scale {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Scale {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        Scale::new(v).map_err(serde::de::Error::custom)
    }
}

/// Integral values print without a fractional part, everything else in
/// shortest round-trip form.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Parses a comma-separated scale list such as `-50,0,50`.
pub fn parse_scale_list(s: &str) -> Result<Vec<Scale>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(Scale::from_str)
        .collect()
}
