//! Gaussian-process correlation families and the Schlather pairwise
//! extremal coefficient.
//!
//! All three families are parameterized by a nugget `c1 ∈ [0, 1]`, a range
//! `c2 > 0` and a smoothness `ν > 0`:
//!
//! ```text
//! Whittle-Matérn       ρ(h) = c1 · 2^(1-ν)/Γ(ν) · (h/c2)^ν · K_ν(h/c2)
//! Cauchy               ρ(h) = c1 · (1 + (h/c2)²)^(-ν)
//! powered exponential  ρ(h) = c1 · exp(-(h/c2)^ν),   ν ≤ 2
//! ```
//!
//! `ρ(0)` is defined as `c1`, the limit from the right.

mod bessel;

pub use bessel::{bessel_k, ln_bessel_k};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    WhittleMatern,
    Cauchy,
    PoweredExponential,
}

impl Family {
    pub const ALL: [Family; 3] = [
        Family::WhittleMatern,
        Family::Cauchy,
        Family::PoweredExponential,
    ];

    /// Largest admissible smoothness for the family.
    pub fn max_smooth(self) -> f64 {
        match self {
            Family::PoweredExponential => 2.0,
            _ => f64::INFINITY,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::WhittleMatern => "whittle-matern",
            Family::Cauchy => "cauchy",
            Family::PoweredExponential => "powered-exponential",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whittle-matern" => Ok(Family::WhittleMatern),
            "cauchy" => Ok(Family::Cauchy),
            "powered-exponential" => Ok(Family::PoweredExponential),
            other => Err(Error::Parameter(format!(
                "unknown correlation family '{other}'"
            ))),
        }
    }
}

/// The inferential target: range and smoothness with the nugget held at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub c2: f64,
    pub nu: f64,
}

impl ParamPoint {
    pub fn new(c2: f64, nu: f64) -> Self {
        Self { c2, nu }
    }

    /// Whether the point lies in the parameter space of `family`.
    pub fn is_valid_for(&self, family: Family) -> bool {
        self.c2 > 0.0
            && self.c2.is_finite()
            && self.nu > 0.0
            && self.nu <= family.max_smooth()
            && self.nu.is_finite()
    }
}

/// A validated correlation function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct CorrelationModel {
    family: Family,
    c1: f64,
    c2: f64,
    nu: f64,
    /// `ln c1 + (1-ν) ln 2 - ln Γ(ν)` for Whittle-Matérn.
    log_norm: f64,
}

/// Serialized form of [`CorrelationModel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default = "unit_nugget")]
    pub c1: f64,
    pub c2: f64,
    pub nu: f64,
}

fn unit_nugget() -> f64 {
    1.0
}

impl TryFrom<ModelSpec> for CorrelationModel {
    type Error = Error;

    fn try_from(s: ModelSpec) -> Result<Self> {
        CorrelationModel::new(s.family, s.c1, s.c2, s.nu)
    }
}

impl From<CorrelationModel> for ModelSpec {
    fn from(m: CorrelationModel) -> Self {
        ModelSpec {
            family: m.family,
            c1: m.c1,
            c2: m.c2,
            nu: m.nu,
        }
    }
}

impl CorrelationModel {
    pub fn new(family: Family, c1: f64, c2: f64, nu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c1) {
            return Err(Error::Parameter(format!(
                "nugget c1 must lie in [0, 1], got {c1}"
            )));
        }
        if !(c2 > 0.0) || !c2.is_finite() {
            return Err(Error::Parameter(format!(
                "range c2 must be positive, got {c2}"
            )));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::Parameter(format!(
                "smooth nu must be positive, got {nu}"
            )));
        }
        if nu > family.max_smooth() {
            return Err(Error::Parameter(format!(
                "smooth nu must not exceed {} for the {family} family, got {nu}",
                family.max_smooth()
            )));
        }
        let log_norm = match family {
            Family::WhittleMatern => c1.ln() + (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu),
            _ => 0.0,
        };
        Ok(Self {
            family,
            c1,
            c2,
            nu,
            log_norm,
        })
    }

    /// Nugget fixed at 1.
    pub fn from_point(family: Family, phi: ParamPoint) -> Result<Self> {
        Self::new(family, 1.0, phi.c2, phi.nu)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn point(&self) -> ParamPoint {
        ParamPoint {
            c2: self.c2,
            nu: self.nu,
        }
    }

    /// `ρ(h)`, validating `h`.
    pub fn correlation(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) {
            return Err(Error::Domain(format!(
                "distance must be non-negative, got {h}"
            )));
        }
        Ok(self.rho(h))
    }

    /// `ρ(h)` for `h ≥ 0`; no argument checks.
    pub fn rho(&self, h: f64) -> f64 {
        if h == 0.0 || self.c1 == 0.0 {
            return self.c1;
        }
        let u = h / self.c2;
        let r = match self.family {
            Family::WhittleMatern => match ln_bessel_k(self.nu, u) {
                Ok(lk) => (self.log_norm + self.nu * u.ln() + lk).exp(),
                // only reachable for u so small that ρ has hit its limit
                Err(_) => self.c1,
            },
            Family::Cauchy => self.c1 * (-self.nu * (u * u).ln_1p()).exp(),
            Family::PoweredExponential => self.c1 * (-u.powf(self.nu)).exp(),
        };
        r.clamp(0.0, self.c1)
    }
}

/// Schlather pairwise extremal coefficient `θ = 1 + √((1-ρ)/2)`.
pub fn extremal_coeff_pair(rho: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!(
            "correlation must lie in [-1, 1], got {rho}"
        )));
    }
    Ok(theta_of_rho(rho))
}

#[inline]
pub(crate) fn theta_of_rho(rho: f64) -> f64 {
    1.0 + (0.5 * (1.0 - rho)).max(0.0).sqrt()
}
