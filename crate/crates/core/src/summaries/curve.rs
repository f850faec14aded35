//! Least-squares fits of extremal-coefficient curves to pairwise estimates.

use super::SummaryMethod;
use crate::corrfuncs::{theta_of_rho, CorrelationModel, Family, ParamPoint};
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, LogBox, NelderMead};
use serde::{Deserialize, Serialize};

pub const CURVE_GRID_POINTS: usize = 200;

/// Uniform grid of [`CURVE_GRID_POINTS`] distances on `[0, h_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveGrid {
    pub h_max: f64,
}

impl CurveGrid {
    pub fn new(h_max: f64) -> Result<Self> {
        if !(h_max > 0.0) || !h_max.is_finite() {
            return Err(Error::Grid(format!(
                "grid length must be positive, got {h_max}"
            )));
        }
        Ok(Self { h_max })
    }

    pub fn step(&self) -> f64 {
        self.h_max / (CURVE_GRID_POINTS - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let step = self.step();
        (0..CURVE_GRID_POINTS).map(|i| i as f64 * step).collect()
    }
}

/// Box for the range and smoothness searched by the curve and composite
/// likelihood fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBox {
    pub c2: LogBox,
    pub nu: LogBox,
}

impl ParamBox {
    pub fn for_family(family: Family) -> Self {
        Self {
            c2: LogBox::new(1e-3, 1e3),
            nu: LogBox::new(1e-2, family.max_smooth().min(20.0)),
        }
    }

    pub fn point(&self, t: &[f64]) -> ParamPoint {
        ParamPoint::new(self.c2.to_bounded(t[0]), self.nu.to_bounded(t[1]))
    }

    pub fn free(&self, phi: ParamPoint) -> [f64; 2] {
        [self.c2.to_free(phi.c2), self.nu.to_free(phi.nu)]
    }

    pub fn at_boundary(&self, t: &[f64]) -> bool {
        self.c2.at_boundary(t[0]) || self.nu.at_boundary(t[1])
    }

    /// Multi-start grid shared by the curve and composite likelihood fits.
    pub fn starts(&self, family: Family) -> Vec<ParamPoint> {
        let nus: &[f64] = match family {
            Family::PoweredExponential => &[0.5, 1.5],
            _ => &[0.5, 2.0],
        };
        [0.5, 2.0, 8.0]
            .iter()
            .flat_map(|&c2| nus.iter().map(move |&nu| ParamPoint::new(c2, nu)))
            .collect()
    }
}

/// Value of the summary curve implied by `model` at distance `h`:
/// `log θ(h)` for the madogram and `θ(h)` for pairwise coefficients.
pub fn curve_value(method: SummaryMethod, model: &CorrelationModel, h: f64) -> f64 {
    let theta = theta_of_rho(model.rho(h));
    match method {
        SummaryMethod::Madogram => theta.ln(),
        _ => theta,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveFit {
    pub phi: ParamPoint,
    pub sse: f64,
    pub converged: bool,
    pub at_boundary: bool,
}

/// Ordinary least squares fit of the model curve to `(h, estimate)` pairs.
pub fn fit_curve_to_pairs(
    method: SummaryMethod,
    family: Family,
    pairs: &[(f64, f64)],
) -> Result<CurveFit> {
    if method == SummaryMethod::TripletTheta {
        return Err(Error::Parameter(
            "the triplet method has no fitted curve".into(),
        ));
    }
    if pairs.is_empty() {
        return Err(Error::EmptySample("no pairwise estimates to fit".into()));
    }
    let bx = ParamBox::for_family(family);
    let sse = |t: &[f64]| {
        let Ok(model) = CorrelationModel::from_point(family, bx.point(t)) else {
            return f64::INFINITY;
        };
        pairs
            .iter()
            .map(|&(h, e)| (e - curve_value(method, &model, h)).powi(2))
            .sum::<f64>()
    };
    let coarse = NelderMead {
        max_evals: 600,
        f_tol: 1e-8,
        x_tol: 1e-4,
        max_restarts: 0,
    };
    let fine = NelderMead {
        max_evals: 4000,
        f_tol: 1e-14,
        x_tol: 1e-9,
        max_restarts: 3,
    };
    let mut best: Option<crate::optim::Minimum> = None;
    let mut diagnostics = Vec::new();
    for start in bx.starts(family) {
        let m = nelder_mead(sse, &bx.free(start), &[1.0, 1.0], &coarse);
        diagnostics.push(format!("start ({}, {}): sse {}", start.c2, start.nu, m.f));
        if m.f.is_finite() && best.as_ref().is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    let best = best.map(|b| {
        let polished = nelder_mead(sse, &b.x, &[0.25, 0.25], &fine);
        let converged = polished.converged;
        (if polished.f <= b.f { polished } else { b }, converged)
    });
    match best {
        Some((m, converged)) => Ok(CurveFit {
            phi: bx.point(&m.x),
            sse: m.f,
            converged,
            at_boundary: bx.at_boundary(&m.x),
        }),
        None => Err(Error::FitFailure {
            reason: "curve fit failed from every start".into(),
            diagnostics,
        }),
    }
}
