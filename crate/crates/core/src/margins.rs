//! Univariate GEV margins: evaluation, maximum-likelihood fitting and the
//! transforms onto unit-Fréchet and unit-Gumbel scales.

use crate::error::{Error, Result};
use crate::maxstable::BlockMaximaPanel;
use crate::optim::{nelder_mead, NelderMead};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::fmt;
use std::str::FromStr;

/// Below this `|ξ|` the Gumbel limit formulas are used.
pub const GUMBEL_SWITCH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginScale {
    Raw,
    UnitFrechet,
    UnitGumbel,
}

impl fmt::Display for MarginScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MarginScale::Raw => "raw",
            MarginScale::UnitFrechet => "unit-frechet",
            MarginScale::UnitGumbel => "unit-gumbel",
        })
    }
}

impl FromStr for MarginScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(MarginScale::Raw),
            "unit-frechet" => Ok(MarginScale::UnitFrechet),
            "unit-gumbel" => Ok(MarginScale::UnitGumbel),
            other => Err(Error::Parameter(format!("unknown margin scale '{other}'"))),
        }
    }
}

/// GEV location, scale and shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl GevParams {
    pub fn new(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() || !xi.is_finite() {
            return Err(Error::Parameter(format!(
                "invalid GEV parameters ({mu}, {sigma}, {xi})"
            )));
        }
        Ok(Self { mu, sigma, xi })
    }

    pub const UNIT_FRECHET: GevParams = GevParams {
        mu: 1.0,
        sigma: 1.0,
        xi: 1.0,
    };
    pub const GUMBEL: GevParams = GevParams {
        mu: 0.0,
        sigma: 1.0,
        xi: 0.0,
    };

    /// `1 + ξ (y - μ)/σ`.
    #[inline]
    fn t(&self, y: f64) -> f64 {
        1.0 + self.xi * (y - self.mu) / self.sigma
    }
}

pub fn gev_cdf(p: &GevParams, y: f64) -> f64 {
    if p.xi.abs() < GUMBEL_SWITCH {
        return (-(-(y - p.mu) / p.sigma).exp()).exp();
    }
    let t = p.t(y);
    if t <= 0.0 {
        return if p.xi > 0.0 { 0.0 } else { 1.0 };
    }
    (-t.powf(-1.0 / p.xi)).exp()
}

pub fn gev_quantile(p: &GevParams, prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Domain(format!(
            "probability must lie in (0, 1), got {prob}"
        )));
    }
    let e = -prob.ln();
    if p.xi.abs() < GUMBEL_SWITCH {
        Ok(p.mu - p.sigma * e.ln())
    } else {
        Ok(p.mu + p.sigma * (e.powf(-p.xi) - 1.0) / p.xi)
    }
}

/// Negative log-likelihood; `+∞` outside the support.
pub fn gev_nll(p: &GevParams, sample: &[f64]) -> f64 {
    if !(p.sigma > 0.0) {
        return f64::INFINITY;
    }
    let n = sample.len() as f64;
    let mut acc = n * p.sigma.ln();
    if p.xi.abs() < GUMBEL_SWITCH {
        for &y in sample {
            let s = (y - p.mu) / p.sigma;
            acc += s + (-s).exp();
        }
        return acc;
    }
    let k = 1.0 + 1.0 / p.xi;
    for &y in sample {
        let t = p.t(y);
        if t <= 0.0 {
            return f64::INFINITY;
        }
        let lt = t.ln();
        acc += k * lt + (-lt / p.xi).exp();
    }
    acc
}

/// Maximum-likelihood GEV fit with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GevFit {
    pub params: GevParams,
    /// Standard errors of `(μ, σ, ξ)` from the inverse observed information.
    /// NaN when the numerical Hessian is not positive definite.
    pub se: [f64; 3],
    pub loglik: f64,
    pub n: usize,
    pub diagnostics: Vec<String>,
}

/// Probability-weighted-moment estimates (Hosking, Wallis & Wood).
fn pwm_start(sorted: &[f64]) -> GevParams {
    let n = sorted.len() as f64;
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for (i, &x) in sorted.iter().enumerate() {
        let i = i as f64;
        b0 += x;
        b1 += x * i / (n - 1.0);
        b2 += x * i * (i - 1.0) / ((n - 1.0) * (n - 2.0));
    }
    b0 /= n;
    b1 /= n;
    b2 /= n;
    let c = (2.0 * b1 - b0) / (3.0 * b2 - b0) - 2f64.ln() / 3f64.ln();
    let k = (7.8590 * c + 2.9554 * c * c).clamp(-0.9, 0.9);
    let l2 = 2.0 * b1 - b0;
    let (sigma, mu) = if k.abs() < 1e-6 {
        let sigma = l2 / 2f64.ln();
        (sigma, b0 - 0.577_215_664_901_532_9 * sigma)
    } else {
        let g = gamma(1.0 + k);
        let sigma = l2 * k / (g * (1.0 - 2f64.powf(-k)));
        (sigma, b0 - sigma * (1.0 - g) / k)
    };
    GevParams {
        mu,
        sigma: sigma.max(1e-3),
        xi: -k,
    }
}

/// Pulls the shape toward zero until every observation is in the support.
fn make_feasible(mut p: GevParams, sample: &[f64]) -> GevParams {
    for _ in 0..60 {
        if gev_nll(&p, sample).is_finite() {
            return p;
        }
        p.xi *= 0.5;
    }
    p.xi = 0.0;
    p
}

/// Maximum-likelihood fit from five starts seeded by PWM estimates.
/// Data are standardized internally, so the fit is affine-equivariant.
pub fn gev_fit_mle(sample: &[f64]) -> Result<GevFit> {
    let n = sample.len();
    if n < 20 {
        return Err(Error::Parameter(format!(
            "GEV fitting needs at least 20 values, got {n}"
        )));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter(
            "GEV sample contains non-finite values".into(),
        ));
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let sd = (sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::FitFailure {
            reason: "degenerate sample: no spread".into(),
            diagnostics: vec![format!("n={n}, mean={mean}, sd={sd}")],
        });
    }
    let x: Vec<f64> = sample.iter().map(|v| (v - mean) / sd).collect();
    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);

    let pwm = pwm_start(&sorted);
    let starts: Vec<GevParams> = [0.0, -0.15, 0.15, -0.3, 0.3]
        .iter()
        .map(|dxi| {
            make_feasible(
                GevParams {
                    xi: pwm.xi + dxi,
                    ..pwm
                },
                &x,
            )
        })
        .collect();

    // (μ, ln σ, ξ); ξ ≤ -1 gives an unbounded likelihood and is excluded
    let objective = |v: &[f64]| {
        if v[2] <= -1.0 {
            return f64::INFINITY;
        }
        gev_nll(
            &GevParams {
                mu: v[0],
                sigma: v[1].exp(),
                xi: v[2],
            },
            &x,
        )
    };
    let opts = NelderMead {
        max_evals: 20_000,
        ..NelderMead::default()
    };
    let mut diagnostics = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (i, s) in starts.iter().enumerate() {
        let v0 = [s.mu, s.sigma.ln(), s.xi];
        let f0 = objective(&v0);
        let m = nelder_mead(objective, &v0, &[0.1, 0.1, 0.05], &opts);
        diagnostics.push(format!(
            "start {i}: ({:.4}, {:.4}, {:.4}) nll {f0:.6} -> {:.6} in {} evals{}",
            s.mu,
            s.sigma,
            s.xi,
            m.f,
            m.evals,
            if m.converged { "" } else { " (not converged)" }
        ));
        if m.f.is_finite() && best.as_ref().is_none_or(|b| m.f < b.1) {
            best = Some((m.x, m.f));
        }
    }
    let Some((v, nll)) = best else {
        return Err(Error::FitFailure {
            reason: "no start reached a finite likelihood".into(),
            diagnostics,
        });
    };
    let std_params = GevParams {
        mu: v[0],
        sigma: v[1].exp(),
        xi: v[2],
    };
    let std_se = standard_errors(&std_params, &x);
    if std_se.iter().any(|s| s.is_nan()) {
        diagnostics
            .push("observed information not positive definite; standard errors unavailable".into());
    }
    let params = GevParams {
        mu: mean + sd * std_params.mu,
        sigma: sd * std_params.sigma,
        xi: std_params.xi,
    };
    Ok(GevFit {
        params,
        se: [sd * std_se[0], sd * std_se[1], std_se[2]],
        loglik: -(nll + n as f64 * sd.ln()),
        n,
        diagnostics,
    })
}

/// Square roots of the diagonal of the inverse numerical Hessian.
fn standard_errors(p: &GevParams, x: &[f64]) -> [f64; 3] {
    let theta = [p.mu, p.sigma, p.xi];
    let f = |t: &[f64; 3]| {
        gev_nll(
            &GevParams {
                mu: t[0],
                sigma: t[1],
                xi: t[2],
            },
            x,
        )
    };
    let h = [1e-4 * p.sigma, 1e-4 * p.sigma, 1e-4];
    let mut hess = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let shifted = |di: f64, dj: f64| {
                let mut t = theta;
                t[i] += di * h[i];
                t[j] += dj * h[j];
                f(&t)
            };
            let v = (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0)
                + shifted(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    match invert3(&hess) {
        Some(inv) if (0..3).all(|i| inv[i][i] > 0.0) => {
            [inv[0][0].sqrt(), inv[1][1].sqrt(), inv[2][2].sqrt()]
        }
        _ => [f64::NAN; 3],
    }
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c =
        |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let cof = [
        [c(1, 1, 2, 2), -c(1, 0, 2, 2), c(1, 0, 2, 1)],
        [-c(0, 1, 2, 2), c(0, 0, 2, 2), -c(0, 0, 2, 1)],
        [c(0, 1, 1, 2), -c(0, 0, 1, 2), c(0, 0, 1, 1)],
    ];
    let det = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2];
    if !det.is_finite() || det.abs() < 1e-300 {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = cof[j][i] / det;
        }
    }
    Some(inv)
}

/// Fits every column of a raw panel independently.
pub fn fit_panel_margins(panel: &BlockMaximaPanel) -> Result<Vec<GevFit>> {
    panel.require_scale(MarginScale::Raw)?;
    (0..panel.n_sites())
        .into_par_iter()
        .map(|j| gev_fit_mle(&panel.column(j).collect::<Vec<_>>()))
        .collect()
}

/// `z = (1 + ξ(y-μ)/σ)^(1/ξ)`, or `exp((y-μ)/σ)` in the Gumbel limit.
pub fn gev_to_frechet(p: &GevParams, y: f64) -> Option<f64> {
    let z = if p.xi.abs() < GUMBEL_SWITCH {
        ((y - p.mu) / p.sigma).exp()
    } else {
        let t = p.t(y);
        if t <= 0.0 {
            return None;
        }
        t.powf(1.0 / p.xi)
    };
    (z > 0.0 && z.is_finite()).then_some(z)
}

/// Inverse of [`gev_to_frechet`].
pub fn frechet_to_gev(p: &GevParams, z: f64) -> f64 {
    if p.xi.abs() < GUMBEL_SWITCH {
        p.mu + p.sigma * z.ln()
    } else {
        p.mu + p.sigma * (z.powf(p.xi) - 1.0) / p.xi
    }
}

pub fn to_unit_frechet(panel: &BlockMaximaPanel, fits: &[GevParams]) -> Result<BlockMaximaPanel> {
    panel.require_scale(MarginScale::Raw)?;
    if fits.len() != panel.n_sites() {
        return Err(Error::Dimension(format!(
            "{} marginal fits for {} sites",
            fits.len(),
            panel.n_sites()
        )));
    }
    panel.map_values(MarginScale::UnitFrechet, |block, site, y| {
        gev_to_frechet(&fits[site], y).ok_or_else(|| Error::Transform {
            block,
            site,
            reason: format!("value {y} lies outside the fitted GEV support"),
        })
    })
}

pub fn frechet_to_gumbel(panel: &BlockMaximaPanel) -> Result<BlockMaximaPanel> {
    panel.require_scale(MarginScale::UnitFrechet)?;
    panel.map_values(MarginScale::UnitGumbel, |block, site, z| {
        if z > 0.0 {
            Ok(z.ln())
        } else {
            Err(Error::Domain(format!(
                "non-positive value {z} at block {block}, site {site}"
            )))
        }
    })
}

pub fn gumbel_to_frechet(panel: &BlockMaximaPanel) -> Result<BlockMaximaPanel> {
    panel.require_scale(MarginScale::UnitGumbel)?;
    panel.map_values(MarginScale::UnitFrechet, |_, _, g| Ok(g.exp()))
}
