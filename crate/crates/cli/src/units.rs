//! Physical quantities written as `<number> <unit>` and converted to SI.
//!
//! Decimal prefixes are applied by shifting the decimal exponent of the
//! literal before parsing, so `100 us` and `1e-4 s` give the same `f64`.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Time,
    /// Ordinary frequency; canonical unit Hz.
    Frequency,
    Length,
    Field,
    Density,
    /// Gyromagnetic ratio; canonical unit Hz/T.
    Gyro,
}

impl Dim {
    fn name(self) -> &'static str {
        match self {
            Dim::Time => "time",
            Dim::Frequency => "frequency",
            Dim::Length => "length",
            Dim::Field => "magnetic field",
            Dim::Density => "number density",
            Dim::Gyro => "gyromagnetic ratio",
        }
    }

    fn examples(self) -> &'static str {
        match self {
            Dim::Time => "s, ms, us, ns, min, h",
            Dim::Frequency => "Hz, kHz, MHz, GHz, rad/s",
            Dim::Length => "m, mm, um, nm",
            Dim::Field => "T, mT, uT, nT, G, mG",
            Dim::Density => "m^-3, cm^-3, nm^-3",
            Dim::Gyro => "Hz/T, MHz/T, GHz/T, rad/s/T",
        }
    }
}

enum Scale {
    /// Multiply by `10^k`.
    Decimal(i32),
    Factor(f64),
}

fn unit_scale(dim: Dim, unit: &str) -> Option<Scale> {
    use Scale::*;
    let two_pi = 2.0 * std::f64::consts::PI;
    Some(match (dim, unit) {
        (Dim::Time, "s") => Decimal(0),
        (Dim::Time, "ms") => Decimal(-3),
        (Dim::Time, "us" | "µs" | "μs") => Decimal(-6),
        (Dim::Time, "ns") => Decimal(-9),
        (Dim::Time, "ps") => Decimal(-12),
        (Dim::Time, "min") => Factor(60.0),
        (Dim::Time, "h") => Factor(3600.0),
        (Dim::Frequency, "Hz") => Decimal(0),
        (Dim::Frequency, "kHz") => Decimal(3),
        (Dim::Frequency, "MHz") => Decimal(6),
        (Dim::Frequency, "GHz") => Decimal(9),
        (Dim::Frequency, "rad/s") => Factor(1.0 / two_pi),
        (Dim::Length, "m") => Decimal(0),
        (Dim::Length, "mm") => Decimal(-3),
        (Dim::Length, "um" | "µm" | "μm") => Decimal(-6),
        (Dim::Length, "nm") => Decimal(-9),
        (Dim::Field, "T") => Decimal(0),
        (Dim::Field, "mT") => Decimal(-3),
        (Dim::Field, "uT" | "µT" | "μT") => Decimal(-6),
        (Dim::Field, "nT") => Decimal(-9),
        (Dim::Field, "G") => Decimal(-4),
        (Dim::Field, "mG") => Decimal(-7),
        (Dim::Density, "m^-3") => Decimal(0),
        (Dim::Density, "cm^-3") => Decimal(6),
        (Dim::Density, "nm^-3") => Decimal(27),
        (Dim::Gyro, "Hz/T") => Decimal(0),
        (Dim::Gyro, "kHz/T") => Decimal(3),
        (Dim::Gyro, "MHz/T") => Decimal(6),
        (Dim::Gyro, "GHz/T") => Decimal(9),
        (Dim::Gyro, "rad/s/T") => Factor(1.0 / two_pi),
        _ => return None,
    })
}

fn shift_decimal(number: &str, k: i32) -> Result<f64, String> {
    let bad = || format!("'{number}' is not a number");
    let (mantissa, exp) = match number.find(['e', 'E']) {
        Some(i) => (&number[..i], number[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (number, 0),
    };
    if mantissa.is_empty() || mantissa.parse::<f64>().is_err() {
        return Err(bad());
    }
    format!("{mantissa}e{}", exp + k).parse::<f64>().map_err(|_| bad())
}

/// Parse `"<number> <unit>"` (space optional) of dimension `dim` into SI.
/// `inf` is accepted for times.
pub fn parse_quantity(text: &str, dim: Dim) -> Result<f64, String> {
    let t = text.trim();
    if dim == Dim::Time && matches!(t, "inf" | "infinity" | "none") {
        return Ok(f64::INFINITY);
    }
    let split = t
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E')
                    && i > 0
                    && t[i + c.len_utf8()..].starts_with(|d: char| d.is_ascii_digit() || d == '-' || d == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    let (number, unit) = (t[..split].trim(), t[split..].trim());
    if unit.is_empty() {
        return Err(format!("'{text}' needs a {} unit ({})", dim.name(), dim.examples()));
    }
    let scale = unit_scale(dim, unit).ok_or_else(|| {
        format!(
            "unknown {} unit '{unit}' in '{text}' (use {})",
            dim.name(),
            dim.examples()
        )
    })?;
    let v = match scale {
        Scale::Decimal(k) => shift_decimal(number, k)?,
        Scale::Factor(f) => shift_decimal(number, 0)? * f,
    };
    if v.is_nan() {
        return Err(format!("'{text}' is not a number"));
    }
    Ok(v)
}

macro_rules! quantity {
    ($name:ident, $dim:expr, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $name(pub f64);

        impl FromStr for $name {
            type Err = CliError;
            fn from_str(s: &str) -> Result<Self, CliError> {
                parse_quantity(s, $dim).map($name).map_err(CliError::Config)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d).map_err(|_| {
                    de::Error::custom(format!(
                        "expected a {} string with a unit ({})",
                        $dim.name(),
                        $dim.examples()
                    ))
                })?;
                parse_quantity(&s, $dim).map($name).map_err(de::Error::custom)
            }
        }
    };
}

quantity!(Time, Dim::Time, "Seconds.");
quantity!(Freq, Dim::Frequency, "Hz (ordinary frequency).");
quantity!(Length, Dim::Length, "Meters.");
quantity!(Field, Dim::Field, "Tesla.");
quantity!(Density, Dim::Density, "Per cubic meter.");
quantity!(Gyro, Dim::Gyro, "Hz/T.");

impl Freq {
    pub fn angular(self) -> f64 {
        2.0 * std::f64::consts::PI * self.0
    }
}

impl Gyro {
    /// rad s⁻¹ T⁻¹.
    pub fn angular(self) -> f64 {
        2.0 * std::f64::consts::PI * self.0
    }
}

/// Dimensionless number; accepts a JSON number or a numeric string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

/// Nonnegative integer; accepts a JSON integer or a numeric string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Int(pub u64);

/// Boolean; accepts `true`/`false` as JSON or string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flag(pub bool);

struct NumVisitor;

impl Visitor<'_> for NumVisitor {
    type Value = f64;
    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number")
    }
    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Ok(v)
    }
    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Ok(v as f64)
    }
    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Ok(v as f64)
    }
    fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
        v.trim()
            .parse()
            .map_err(|_| E::custom(format!("'{v}' is not a number")))
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(NumVisitor).map(Num)
    }
}

impl<'de> Deserialize<'de> for Int {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = u64;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonnegative integer")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<u64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<u64, E> {
                u64::try_from(v).map_err(|_| E::custom(format!("{v} is negative")))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<u64, E> {
                if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 {
                    Ok(v as u64)
                } else {
                    Err(E::custom(format!("{v} is not a nonnegative integer")))
                }
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<u64, E> {
                let t = v.trim();
                t.parse::<u64>().or_else(|_| match t.parse::<f64>() {
                    Ok(f) => self.visit_f64(f),
                    Err(_) => Err(E::custom(format!("'{v}' is not an integer"))),
                })
            }
        }
        d.deserialize_any(V).map(Int)
    }
}

impl<'de> Deserialize<'de> for Flag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = bool;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("true or false")
            }
            fn visit_bool<E: de::Error>(self, v: bool) -> Result<bool, E> {
                Ok(v)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<bool, E> {
                match v.trim() {
                    "true" | "yes" | "1" => Ok(true),
                    "false" | "no" | "0" => Ok(false),
                    _ => Err(E::custom(format!("'{v}' is not a boolean"))),
                }
            }
        }
        d.deserialize_any(V).map(Flag)
    }
}
