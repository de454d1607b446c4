//! Memoryless power amplifier models with unit linear gain.
//!
//! Every model here has the form `y = x·g(|x|²)` for a complex gain `g`, which
//! is what [`PaModel::gain`] exposes. Simulation code uses that form directly.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::array::linear_from_db;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PaModel {
    Ideal,
    /// `y = x + a3·x·|x|²`. A complex `a3` carries both AM/AM and AM/PM.
    ThirdOrder { a3: Complex64 },
    /// `y = x / (1 + |x/√p_sat|^{2S})^{1/(2S)}`, AM/AM only.
    Rapp { saturation_power: f64, smoothness: f64 },
}

impl PaModel {
    pub fn third_order(a3: Complex64) -> Result<Self> {
        if !(a3.re.is_finite() && a3.im.is_finite()) {
            return Err(Error::Domain(format!("a3 must be finite, got {a3}")));
        }
        Ok(PaModel::ThirdOrder { a3 })
    }

    pub fn rapp(saturation_power: f64, smoothness: f64) -> Result<Self> {
        if !(saturation_power.is_finite() && saturation_power > 0.0) {
            return Err(Error::Domain(format!(
                "saturation power must be positive, got {saturation_power}"
            )));
        }
        if !(smoothness.is_finite() && smoothness > 0.0) {
            return Err(Error::Domain(format!(
                "smoothness must be positive, got {smoothness}"
            )));
        }
        Ok(PaModel::Rapp {
            saturation_power,
            smoothness,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PaModel::Ideal => "ideal",
            PaModel::ThirdOrder { .. } => "third-order",
            PaModel::Rapp { .. } => "rapp",
        }
    }

    /// Complex gain `g` such that `amplify(x) = x·g(|x|²)`.
    #[inline]
    pub fn gain(&self, input_power: f64) -> Complex64 {
        match *self {
            PaModel::Ideal => Complex64::new(1.0, 0.0),
            PaModel::ThirdOrder { a3 } => Complex64::new(1.0, 0.0) + a3 * input_power,
            PaModel::Rapp {
                saturation_power,
                smoothness,
            } => Complex64::new(rapp_gain(input_power / saturation_power, smoothness), 0.0),
        }
    }

    #[inline]
    pub fn amplify(&self, x: Complex64) -> Complex64 {
        match *self {
            PaModel::Ideal => x,
            PaModel::ThirdOrder { a3 } => x + a3 * x * x.norm_sqr(),
            PaModel::Rapp { .. } => x * self.gain(x.norm_sqr()),
        }
    }

    /// Splits the third-order output into `(x, a3·x·|x|²)`.
    pub fn third_order_split(&self, x: Complex64) -> Result<(Complex64, Complex64)> {
        match *self {
            PaModel::ThirdOrder { a3 } => Ok((x, a3 * x * x.norm_sqr())),
            other => Err(Error::UnsupportedModel {
                expected: "third-order",
                actual: other.name().into(),
            }),
        }
    }

    /// Third-order coefficient, with the ideal PA read as `a3 = 0`.
    pub fn cubic_coefficient(&self) -> Option<Complex64> {
        match *self {
            PaModel::Ideal => Some(Complex64::new(0.0, 0.0)),
            PaModel::ThirdOrder { a3 } => Some(a3),
            PaModel::Rapp { .. } => None,
        }
    }
}

/// Real Rapp gain for normalized input power `u = |x|²/p_sat`.
#[inline]
fn rapp_gain(u: f64, smoothness: f64) -> f64 {
    if smoothness == 2.0 {
        1.0 / (1.0 + u * u).sqrt().sqrt()
    } else if smoothness == 1.0 {
        1.0 / (1.0 + u).sqrt()
    } else {
        (1.0 + u.powf(smoothness)).powf(-0.5 / smoothness)
    }
}

/// Descriptor syntax: `ideal`, `poly3:<a3_re>,<a3_im>`, `rapp:<psat_db>,<S>`.
impl FromStr for PaModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::config("pa", format!("{reason} in `{s}`"));
        let (kind, args) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a)),
            None => (s.trim(), None),
        };
        let two_numbers = |args: Option<&str>| -> Result<(f64, f64)> {
            let args = args.ok_or_else(|| bad("missing parameters"))?;
            let parts: Vec<&str> = args.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(bad("expected two comma-separated numbers"));
            }
            let a = parts[0].parse::<f64>().map_err(|_| bad("unparsable number"))?;
            let b = parts[1].parse::<f64>().map_err(|_| bad("unparsable number"))?;
            Ok((a, b))
        };
        match kind {
            "ideal" if args.is_none() => Ok(PaModel::Ideal),
            "poly3" => {
                let (re, im) = two_numbers(args)?;
                PaModel::third_order(Complex64::new(re, im)).map_err(|e| bad(&e.to_string()))
            }
            "rapp" => {
                let (psat_db, smooth) = two_numbers(args)?;
                PaModel::rapp(linear_from_db(psat_db), smooth).map_err(|e| bad(&e.to_string()))
            }
            _ => Err(bad("unknown PA model")),
        }
    }
}

impl fmt::Display for PaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PaModel::Ideal => write!(f, "ideal"),
            PaModel::ThirdOrder { a3 } => write!(f, "poly3:{},{}", a3.re, a3.im),
            PaModel::Rapp {
                saturation_power,
                smoothness,
            } => write!(f, "rapp:{},{}", 10.0 * saturation_power.log10(), smoothness),
        }
    }
}
