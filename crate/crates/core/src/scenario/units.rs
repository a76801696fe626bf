//! Unit-suffixed quantities in configs, converted to `ω_a = 1` units.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    /// Already in units of the ancilla frequency.
    Scaled,
    Hz,
    KHz,
    MHz,
    GHz,
    Kelvin,
    MilliKelvin,
}

impl Unit {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "" => Self::Scaled,
            "Hz" => Self::Hz,
            "kHz" | "KHz" => Self::KHz,
            "MHz" => Self::MHz,
            "GHz" => Self::GHz,
            "K" => Self::Kelvin,
            "mK" => Self::MilliKelvin,
            _ => return None,
        })
    }

    fn suffix(self) -> &'static str {
        match self {
            Self::Scaled => "",
            Self::Hz => "Hz",
            Self::KHz => "kHz",
            Self::MHz => "MHz",
            Self::GHz => "GHz",
            Self::Kelvin => "K",
            Self::MilliKelvin => "mK",
        }
    }

    fn hertz(self) -> Option<f64> {
        match self {
            Self::Hz => Some(1.0),
            Self::KHz => Some(1e3),
            Self::MHz => Some(1e6),
            Self::GHz => Some(1e9),
            _ => None,
        }
    }

    fn kelvin(self) -> Option<f64> {
        match self {
            Self::Kelvin => Some(1.0),
            Self::MilliKelvin => Some(1e-3),
            _ => None,
        }
    }
}

/// A number with an optional unit, written as `5`, `"5 MHz"` or `"65 mK"`.
/// Frequencies are ordinary frequencies `f`; the common `2π` cancels on scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn scaled(value: f64) -> Self {
        Self {
            value,
            unit: Unit::Scaled,
        }
    }

    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim();
        let split = t
            .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
            .unwrap_or(t.len());
        // "e" may start a unit-free exponent; only a trailing alphabetic run is a unit
        let (num, unit) = t.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("cannot read a number from {s:?}"))?;
        let unit = Unit::parse(unit.trim())
            .ok_or_else(|| format!("unknown unit {:?} in {s:?}", unit.trim()))?;
        if !value.is_finite() {
            return Err(format!("non-finite quantity {s:?}"));
        }
        Ok(Self { value, unit })
    }

    pub fn is_frequency(&self) -> bool {
        self.unit.hertz().is_some()
    }

    pub fn is_scaled(&self) -> bool {
        self.unit == Unit::Scaled
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.unit == Unit::Scaled {
            write!(f, "{}", self.value)
        } else {
            write!(f, "{} {}", self.value, self.unit.suffix())
        }
    }
}

impl Serialize for Quantity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.unit == Unit::Scaled {
            s.serialize_f64(self.value)
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Quantity;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a string such as \"5 MHz\" or \"65 mK\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Quantity, E> {
                Ok(Quantity::scaled(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Quantity, E> {
                Ok(Quantity::scaled(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Quantity, E> {
                Ok(Quantity::scaled(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Quantity, E> {
                Quantity::parse(v).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// Converts quantities to `ω_a = 1` units given the ancilla frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitScale {
    /// Ancilla frequency in Hz, when the config gives it with a unit.
    pub f_a: Option<f64>,
}

impl UnitScale {
    pub fn new(omega_a: &Quantity) -> Result<Self> {
        match omega_a.unit {
            Unit::Scaled if omega_a.value == 1.0 => Ok(Self { f_a: None }),
            Unit::Scaled => Err(Error::InvalidConfiguration(
                "a dimensionless omega_a must be 1 (all frequencies are scaled by it)".into(),
            )),
            u => match u.hertz() {
                Some(h) if omega_a.value > 0.0 => Ok(Self {
                    f_a: Some(omega_a.value * h),
                }),
                _ => Err(Error::InvalidConfiguration(format!(
                    "omega_a = {omega_a} is not a positive frequency"
                ))),
            },
        }
    }

    fn need(&self, q: &Quantity) -> Result<f64> {
        self.f_a.ok_or_else(|| {
            Error::InvalidConfiguration(format!("{q} has a unit but omega_a was given without one"))
        })
    }

    pub fn frequency(&self, q: &Quantity) -> Result<f64> {
        if q.is_scaled() {
            return Ok(q.value);
        }
        let h = q
            .unit
            .hertz()
            .ok_or_else(|| Error::InvalidConfiguration(format!("{q} is not a frequency")))?;
        Ok(q.value * h / self.need(q)?)
    }

    /// `k_B T / (h f_a)`.
    pub fn temperature(&self, q: &Quantity) -> Result<f64> {
        if q.is_scaled() {
            return Ok(q.value);
        }
        let k = q
            .unit
            .kelvin()
            .ok_or_else(|| Error::InvalidConfiguration(format!("{q} is not a temperature")))?;
        Ok(BOLTZMANN * q.value * k / (PLANCK * self.need(q)?))
    }

    /// Kelvin corresponding to one scaled temperature unit.
    pub fn kelvin_per_unit(&self) -> Option<f64> {
        self.f_a.map(|f| PLANCK * f / BOLTZMANN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_suffixes() {
        assert_eq!(
            Quantity::parse("5 MHz").unwrap(),
            Quantity {
                value: 5.0,
                unit: Unit::MHz
            }
        );
        assert_eq!(
            Quantity::parse("65mK").unwrap(),
            Quantity {
                value: 65.0,
                unit: Unit::MilliKelvin
            }
        );
        assert_eq!(Quantity::parse("1e-3").unwrap(), Quantity::scaled(1e-3));
        assert_eq!(
            Quantity::parse("2.5e2 kHz").unwrap(),
            Quantity {
                value: 250.0,
                unit: Unit::KHz
            }
        );
        assert!(Quantity::parse("3 parsec").is_err());
        assert!(Quantity::parse("MHz").is_err());
    }

    #[test]
    fn scaling_to_ancilla_units() {
        let s = UnitScale::new(&Quantity::parse("10 GHz").unwrap()).unwrap();
        assert!((s.frequency(&Quantity::parse("5 MHz").unwrap()).unwrap() - 5e-4).abs() < 1e-18);
        assert!((s.frequency(&Quantity::parse("100 Hz").unwrap()).unwrap() - 1e-8).abs() < 1e-22);
        let one_kelvin = s.temperature(&Quantity::parse("1 K").unwrap()).unwrap();
        assert!((one_kelvin - 1.380649e-23 / (6.62607015e-34 * 1e10)).abs() < 1e-12);
        assert!(
            (s.temperature(&Quantity::parse("65 mK").unwrap()).unwrap() - 0.065 * one_kelvin).abs()
                < 1e-14
        );
        assert!(s.temperature(&Quantity::parse("5 MHz").unwrap()).is_err());
        let bare = UnitScale::new(&Quantity::scaled(1.0)).unwrap();
        assert!(bare.frequency(&Quantity::parse("1 MHz").unwrap()).is_err());
        assert!(UnitScale::new(&Quantity::scaled(2.0)).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        for text in ["\"300 K\"", "0.25", "\"500 kHz\""] {
            let q: Quantity = serde_json::from_str(text).unwrap();
            let back: Quantity = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
            assert_eq!(q, back);
        }
    }
}
