//! Pairwise composite likelihood for the Schlather process.
//!
//! With `S = √(z1² - 2ρ z1 z2 + z2²)` the bivariate exponent measure is
//! `V = (1/z1 + 1/z2 + S/(z1 z2)) / 2`, the distribution function is
//! `exp(-V)` and the density is `exp(-V) (V1 V2 - V12)` with
//!
//! ```text
//! V1  = -(1 + (z2 - ρ z1)/S) / (2 z1²)
//! V2  = -(1 + (z1 - ρ z2)/S) / (2 z2²)
//! V12 = -(1 - ρ²) / (2 S³)
//! ```

use crate::corrfuncs::{CorrelationModel, Family, ParamPoint};
use crate::error::{Error, Result};
use crate::fsum::fsum;
use crate::margins::MarginScale;
use crate::maxstable::BlockMaximaPanel;
use crate::optim::{nelder_mead, NelderMead};
use crate::summaries::ParamBox;
use rayon::prelude::*;
use serde::Serialize;

/// Log of the bivariate Schlather density at `(z1, z2)`.
pub fn pair_logdensity(z1: f64, z2: f64, rho: f64) -> Result<f64> {
    if !(z1 > 0.0) || !(z2 > 0.0) || !z1.is_finite() || !z2.is_finite() {
        return Err(Error::Domain(format!(
            "pair density requires positive arguments, got ({z1}, {z2})"
        )));
    }
    if !(-1.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!(
            "pair density requires -1 ≤ ρ < 1, got {rho}"
        )));
    }
    Ok(pair_logdensity_unchecked(z1, z2, rho))
}

#[inline]
fn pair_logdensity_unchecked(z1: f64, z2: f64, rho: f64) -> f64 {
    let s2 = z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2;
    let s = s2.sqrt();
    let v = 0.5 * (1.0 / z1 + 1.0 / z2 + s / (z1 * z2));
    let a1 = 1.0 + (z2 - rho * z1) / s;
    let a2 = 1.0 + (z1 - rho * z2) / s;
    let v1v2 = a1 * a2 / (4.0 * z1 * z1 * z2 * z2);
    let minus_v12 = (1.0 - rho * rho) / (2.0 * s2 * s);
    -v + (v1v2 + minus_v12).ln()
}

/// `Σ_blocks Σ_{j<k} log f(z_ij, z_ik; ρ(h_jk))`, summed with correct
/// rounding so the value does not depend on block order.
pub fn composite_loglik(panel: &BlockMaximaPanel, model: &CorrelationModel) -> Result<f64> {
    panel.require_scale(MarginScale::UnitFrechet)?;
    let design = panel.design();
    let pairs: Vec<(usize, usize, f64)> = design
        .pairs()
        .map(|(j, k)| (j, k, model.rho(design.distance(j, k))))
        .collect();
    if let Some(&(j, k, rho)) = pairs.iter().find(|p| !(p.2 < 1.0)) {
        return Err(Error::Domain(format!(
            "pair ({j}, {k}) has correlation {rho}; the pair density is undefined at ρ = 1"
        )));
    }
    let d = panel.n_sites();
    let per_block: Vec<f64> = panel
        .values()
        .par_chunks(d)
        .with_min_len(16)
        .map(|z| {
            fsum(
                pairs
                    .iter()
                    .map(|&(j, k, rho)| pair_logdensity_unchecked(z[j], z[k], rho)),
            )
        })
        .collect();
    Ok(fsum(per_block))
}

/// One optimizer run of a multi-start fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartRecord {
    pub start: ParamPoint,
    pub start_loglik: f64,
    pub end: ParamPoint,
    pub loglik: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositeFit {
    pub phi_hat: ParamPoint,
    pub loglik: f64,
    /// False when the best run did not converge or stopped on the box boundary.
    pub converged: bool,
    pub at_boundary: bool,
    pub starts: Vec<StartRecord>,
}

/// Maximum composite likelihood over the range/smoothness box, from the
/// shared start grid.
pub fn mcle_fit(panel: &BlockMaximaPanel, family: Family) -> Result<CompositeFit> {
    panel.require_scale(MarginScale::UnitFrechet)?;
    let bx = ParamBox::for_family(family);
    let loglik = |phi: ParamPoint| {
        CorrelationModel::from_point(family, phi)
            .and_then(|m| composite_loglik(panel, &m))
            .unwrap_or(f64::NEG_INFINITY)
    };
    let opts = NelderMead {
        max_evals: 3000,
        f_tol: 1e-10,
        x_tol: 1e-8,
        max_restarts: 3,
    };
    let mut starts: Vec<StartRecord> = Vec::new();
    let mut best: Option<(usize, Vec<f64>)> = None;
    for start in bx.starts(family) {
        let start_loglik = loglik(start);
        let m = nelder_mead(
            |t| -loglik(bx.point(t)),
            &bx.free(start),
            &[1.0, 1.0],
            &opts,
        );
        let record = StartRecord {
            start,
            start_loglik,
            end: bx.point(&m.x),
            loglik: -m.f,
            evals: m.evals,
            converged: m.converged,
        };
        let better = record.loglik.is_finite()
            && best
                .as_ref()
                .is_none_or(|(i, _)| record.loglik > starts[*i].loglik);
        starts.push(record);
        if better {
            best = Some((starts.len() - 1, m.x));
        }
    }
    let Some((i, t)) = best else {
        return Err(Error::FitFailure {
            reason: "composite likelihood is not finite at any start".into(),
            diagnostics: starts.iter().map(|r| format!("{r:?}")).collect(),
        });
    };
    let at_boundary = bx.at_boundary(&t);
    Ok(CompositeFit {
        phi_hat: starts[i].end,
        loglik: starts[i].loglik,
        converged: starts[i].converged && !at_boundary,
        at_boundary,
        starts,
    })
}
