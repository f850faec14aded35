use crate::corrfuncs::CorrelationModel;
use crate::error::{Error, Result};
use crate::summaries::trapezoid;
use serde::Serialize;

pub const MSE_GRID_POINTS: usize = 500;
/// Correlation level bounding the integration domain.
pub const MSE_LEVEL: f64 = 0.1;
const BISECTION_TOL: f64 = 1e-8;

/// Integration domain `{h : ρ_true(h) ≥ 0.1}` sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseDomain {
    pub h_star: f64,
    /// True when `ρ_true` stays above the level over the whole diameter and
    /// the domain was cut there.
    pub truncated: bool,
    pub grid: Vec<f64>,
}

pub fn mse_domain(truth: &CorrelationModel, diameter: f64) -> Result<MseDomain> {
    if !(diameter > 0.0) || !diameter.is_finite() {
        return Err(Error::Parameter(format!(
            "design diameter must be positive, got {diameter}"
        )));
    }
    if truth.c1() < MSE_LEVEL {
        return Err(Error::Parameter(format!(
            "true correlation never reaches {MSE_LEVEL}"
        )));
    }
    let (h_star, truncated) = if truth.rho(diameter) >= MSE_LEVEL {
        log::warn!(
            "true correlation stays above {MSE_LEVEL} across the design diameter {diameter}"
        );
        (diameter, true)
    } else {
        let (mut lo, mut hi) = (0.0, diameter);
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if truth.rho(mid) >= MSE_LEVEL {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi), false)
    };
    let step = h_star / (MSE_GRID_POINTS - 1) as f64;
    let grid = (0..MSE_GRID_POINTS).map(|i| i as f64 * step).collect();
    Ok(MseDomain {
        h_star,
        truncated,
        grid,
    })
}

impl MseDomain {
    pub fn step(&self) -> f64 {
        self.h_star / (MSE_GRID_POINTS - 1) as f64
    }

    /// `∫ (ρ_true - ρ̂)² dh` by the trapezoid rule, with `ρ̂` given on the grid.
    pub fn mse(&self, truth: &CorrelationModel, estimate: &[f64]) -> Result<f64> {
        if estimate.len() != self.grid.len() {
            return Err(Error::Grid(format!(
                "estimate has {} points, the integration grid {}",
                estimate.len(),
                self.grid.len()
            )));
        }
        let sq: Vec<f64> = self
            .grid
            .iter()
            .zip(estimate)
            .map(|(&h, e)| (truth.rho(h) - e).powi(2))
            .collect();
        Ok(trapezoid(&sq, self.step()))
    }

    /// Fraction of grid points where `ρ_true` lies inside `[lower, upper]`.
    pub fn coverage(&self, truth: &CorrelationModel, lower: &[f64], upper: &[f64]) -> f64 {
        let inside = self
            .grid
            .iter()
            .zip(lower.iter().zip(upper))
            .filter(|(&h, (&l, &u))| {
                let r = truth.rho(h);
                r >= l - 1e-12 && r <= u + 1e-12
            })
            .count();
        inside as f64 / self.grid.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseResult {
    pub mse: f64,
    pub h_star: f64,
    pub truncated: bool,
}

/// Integrated squared error of `estimate` against `truth` where the true
/// correlation is at least 0.1.
pub fn mse_curve<F: Fn(f64) -> f64>(
    truth: &CorrelationModel,
    diameter: f64,
    estimate: F,
) -> Result<MseResult> {
    let domain = mse_domain(truth, diameter)?;
    let values: Vec<f64> = domain.grid.iter().map(|&h| estimate(h)).collect();
    Ok(MseResult {
        mse: domain.mse(truth, &values)?,
        h_star: domain.h_star,
        truncated: domain.truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrfuncs::Family;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let truth = CorrelationModel::new(Family::WhittleMatern, 1.0, 1.0, 0.5).unwrap();
        let r = mse_curve(&truth, 20.0, |h| truth.rho(h)).unwrap();
        assert_eq!(r.mse, 0.0);
        assert!((r.h_star - 10f64.ln()).abs() < 1e-8);
        assert!(!r.truncated);
        let shifted = mse_curve(&truth, 20.0, |h| truth.rho(h) + 0.01).unwrap();
        assert!((shifted.mse - 1e-4 * r.h_star).abs() < 1e-15);
    }

    #[test]
    fn long_range_truth_is_truncated() {
        let truth = CorrelationModel::new(Family::Cauchy, 1.0, 50.0, 1.0).unwrap();
        let r = mse_curve(&truth, 5.0, |_| 0.0).unwrap();
        assert!(r.truncated);
        assert_eq!(r.h_star, 5.0);
    }

    proptest! {
        #[test]
        fn nonnegative_and_zero_iff_equal(c2 in 0.2f64..5.0, nu in 0.2f64..4.0, off in -0.2f64..0.2) {
            let truth = CorrelationModel::new(Family::WhittleMatern, 1.0, c2, nu).unwrap();
            let r = mse_curve(&truth, 15.0, |h| truth.rho(h) + off).unwrap();
            prop_assert!(r.mse >= 0.0);
            prop_assert_eq!(r.mse == 0.0, off == 0.0);
        }
    }
}
