//! Angle literals: `0.0204pi`, `1.3rad`, or a bare number in units of π.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AngleUnit {
    Pi,
    Rad,
}

/// An angle remembered in the unit it was written in, so formatting and
/// parsing round-trip exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Angle {
    pub value: f64,
    pub unit: AngleUnit,
}

impl Angle {
    pub fn pi(value: f64) -> Self {
        Self {
            value,
            unit: AngleUnit::Pi,
        }
    }

    pub fn rad(value: f64) -> Self {
        Self {
            value,
            unit: AngleUnit::Rad,
        }
    }

    pub fn radians(&self) -> f64 {
        match self.unit {
            AngleUnit::Pi => self.value * PI,
            AngleUnit::Rad => self.value,
        }
    }
}

impl FromStr for Angle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let (num, unit) = if let Some(n) = t.strip_suffix("pi").or_else(|| t.strip_suffix('π')) {
            (n, AngleUnit::Pi)
        } else if let Some(n) = t.strip_suffix("rad") {
            (n, AngleUnit::Rad)
        } else {
            (t, AngleUnit::Pi)
        };
        let num = num.trim().strip_suffix('*').unwrap_or(num).trim();
        let value = match (num, unit) {
            ("" | "+", AngleUnit::Pi) => 1.0,
            ("-", AngleUnit::Pi) => -1.0,
            _ => num.parse::<f64>().map_err(|_| format!("invalid angle `{s}`"))?,
        };
        if !value.is_finite() {
            return Err(format!("angle `{s}` is not finite"));
        }
        Ok(Self { value, unit })
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.unit {
            AngleUnit::Pi => write!(f, "{}pi", self.value),
            AngleUnit::Rad => write!(f, "{}rad", self.value),
        }
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}
