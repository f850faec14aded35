//! Summary statistics of block-maxima panels: the madogram, pairwise and
//! tripletwise extremal coefficient estimators, fitted curves, clustered
//! triplet summaries and the distances between summaries.

mod curve;
mod ward;

pub use curve::{
    curve_value, fit_curve_to_pairs, CurveFit, CurveGrid, ParamBox, CURVE_GRID_POINTS,
};
pub use ward::{
    triangle_distance, ward_cluster, ward_cluster_with_limit, TripletClustering, DEFAULT_MAX_SITES,
};

use crate::corrfuncs::{CorrelationModel, Family, ParamPoint};
use crate::error::{Error, Result};
use crate::margins::MarginScale;
use crate::maxstable::{BlockMaximaPanel, SpatialDesign};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SummaryMethod {
    #[serde(rename = "madogram")]
    Madogram,
    #[serde(rename = "pairwise")]
    PairwiseTheta,
    #[serde(rename = "triplet")]
    TripletTheta,
}

impl SummaryMethod {
    pub const ALL: [SummaryMethod; 3] = [
        SummaryMethod::Madogram,
        SummaryMethod::PairwiseTheta,
        SummaryMethod::TripletTheta,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SummaryMethod::Madogram => "madogram",
            SummaryMethod::PairwiseTheta => "pairwise",
            SummaryMethod::TripletTheta => "triplet",
        }
    }
}

impl fmt::Display for SummaryMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SummaryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "madogram" => Ok(SummaryMethod::Madogram),
            "pairwise" => Ok(SummaryMethod::PairwiseTheta),
            "triplet" => Ok(SummaryMethod::TripletTheta),
            other => Err(Error::Parameter(format!(
                "unknown summary method '{other}'"
            ))),
        }
    }
}

/// A fitted curve sampled on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub method: SummaryMethod,
    pub family: Family,
    pub phi: ParamPoint,
    pub grid: CurveGrid,
    pub values: Vec<f64>,
}

/// Cluster means of the triplet coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletSummary {
    pub theta_bar: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SummaryVector {
    Curve(CurveSummary),
    Triplet(TripletSummary),
}

impl SummaryVector {
    pub fn method(&self) -> SummaryMethod {
        match self {
            SummaryVector::Curve(c) => c.method,
            SummaryVector::Triplet(_) => SummaryMethod::TripletTheta,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            SummaryVector::Curve(c) => &c.values,
            SummaryVector::Triplet(t) => &t.theta_bar,
        }
    }

    /// The distance matching the summary type.
    pub fn distance(&self, other: &SummaryVector) -> Result<f64> {
        match (self, other) {
            (SummaryVector::Curve(a), SummaryVector::Curve(b)) => distance_curve(a, b),
            (SummaryVector::Triplet(a), SummaryVector::Triplet(b)) => distance_vector(a, b),
            _ => Err(Error::Parameter(format!(
                "cannot compare a {} summary with a {} summary",
                self.method(),
                other.method()
            ))),
        }
    }
}

fn check_pair(panel: &BlockMaximaPanel, sites: &[usize]) -> Result<()> {
    if panel.n_blocks() == 0 {
        return Err(Error::EmptySample("panel has no blocks".into()));
    }
    if let Some(&s) = sites.iter().find(|&&s| s >= panel.n_sites()) {
        return Err(Error::Dimension(format!(
            "site index {s} out of range for {} sites",
            panel.n_sites()
        )));
    }
    Ok(())
}

/// `(1/2n) Σ_i |z_i(x_j) - z_i(x_k)|` on unit-Gumbel margins.
pub fn madogram_estimate(panel: &BlockMaximaPanel, j: usize, k: usize) -> Result<f64> {
    panel.require_scale(MarginScale::UnitGumbel)?;
    check_pair(panel, &[j, k])?;
    Ok(madogram_of(panel.values(), panel.n_sites(), j, k))
}

fn madogram_of(values: &[f64], d: usize, j: usize, k: usize) -> f64 {
    let n = values.len() / d;
    let s: f64 = values.chunks_exact(d).map(|r| (r[j] - r[k]).abs()).sum();
    s / (2.0 * n as f64)
}

/// `n / Σ_i 1/max(z_i(x_j), z_i(x_k))` on unit-Fréchet margins.
pub fn pairwise_theta_hat(panel: &BlockMaximaPanel, j: usize, k: usize) -> Result<f64> {
    panel.require_scale(MarginScale::UnitFrechet)?;
    check_pair(panel, &[j, k])?;
    Ok(max_theta(panel.values(), panel.n_sites(), &[j, k]))
}

/// `n / Σ_i 1/max(z_i(x_j), z_i(x_k), z_i(x_l))` on unit-Fréchet margins.
pub fn triplet_theta_hat(panel: &BlockMaximaPanel, t: [usize; 3]) -> Result<f64> {
    panel.require_scale(MarginScale::UnitFrechet)?;
    check_pair(panel, &t)?;
    Ok(max_theta(panel.values(), panel.n_sites(), &t))
}

fn max_theta(values: &[f64], d: usize, sites: &[usize]) -> f64 {
    let n = values.len() / d;
    let s: f64 = values
        .chunks_exact(d)
        .map(|r| {
            1.0 / sites
                .iter()
                .map(|&j| r[j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    n as f64 / s
}

/// Cluster means of the triplet coefficient estimates.
pub fn summarize_triplet(
    panel: &BlockMaximaPanel,
    clustering: &TripletClustering,
) -> Result<TripletSummary> {
    panel.require_scale(MarginScale::UnitFrechet)?;
    if !clustering.matches(panel.design()) {
        return Err(Error::Design(
            "clustering was built on a different design".into(),
        ));
    }
    check_pair(panel, &[])?;
    let d = panel.n_sites();
    let values = panel.values();
    let estimates: Vec<f64> = clustering
        .triplets()
        .par_iter()
        .with_min_len(64)
        .map(|t| max_theta(values, d, t))
        .collect();
    let mut sums = vec![0.0; clustering.k()];
    for (e, &c) in estimates.iter().zip(clustering.cluster_of()) {
        sums[c - 1] += e;
    }
    let theta_bar = sums
        .iter()
        .zip(clustering.counts())
        .map(|(s, &n)| s / n as f64)
        .collect();
    Ok(TripletSummary {
        theta_bar,
        counts: clustering.counts().to_vec(),
    })
}

/// Pairwise `(h, estimate)` points in lexicographic pair order.
pub fn pairwise_estimates(
    panel: &BlockMaximaPanel,
    method: SummaryMethod,
) -> Result<Vec<(f64, f64)>> {
    let design = panel.design().clone();
    check_pair(panel, &[])?;
    let d = panel.n_sites();
    match method {
        SummaryMethod::Madogram => {
            let gumbel: Vec<f64> = match panel.scale() {
                MarginScale::UnitGumbel => panel.values().to_vec(),
                MarginScale::UnitFrechet => panel.values().iter().map(|z| z.ln()).collect(),
                other => {
                    return Err(Error::Scale {
                        expected: MarginScale::UnitGumbel.to_string(),
                        found: other.to_string(),
                    })
                }
            };
            Ok(design
                .pairs()
                .map(|(j, k)| (design.distance(j, k), madogram_of(&gumbel, d, j, k)))
                .collect())
        }
        SummaryMethod::PairwiseTheta => {
            panel.require_scale(MarginScale::UnitFrechet)?;
            let v = panel.values();
            Ok(design
                .pairs()
                .map(|(j, k)| (design.distance(j, k), max_theta(v, d, &[j, k])))
                .collect())
        }
        SummaryMethod::TripletTheta => Err(Error::Parameter(
            "the triplet method has no pairwise estimates".into(),
        )),
    }
}

/// OLS curve summary. The madogram method accepts unit-Gumbel panels, or
/// unit-Fréchet panels which are log-transformed on the fly.
pub fn ols_fit_curve(
    method: SummaryMethod,
    panel: &BlockMaximaPanel,
    family: Family,
) -> Result<CurveSummary> {
    let pairs = pairwise_estimates(panel, method)?;
    let fit = fit_curve_to_pairs(method, family, &pairs)?;
    let grid = CurveGrid::new(panel.design().max_distance())?;
    Ok(curve_summary(method, family, fit.phi, grid))
}

/// The curve implied by `phi`, sampled on `grid`.
pub fn curve_summary(
    method: SummaryMethod,
    family: Family,
    phi: ParamPoint,
    grid: CurveGrid,
) -> CurveSummary {
    let values = match CorrelationModel::from_point(family, phi) {
        Ok(model) => grid
            .points()
            .iter()
            .map(|&h| curve_value(method, &model, h))
            .collect(),
        Err(_) => vec![f64::NAN; CURVE_GRID_POINTS],
    };
    CurveSummary {
        method,
        family,
        phi,
        grid,
        values,
    }
}

/// Trapezoid approximation of `∫ |s(h) - s'(h)| dh` over the shared grid.
pub fn distance_curve(a: &CurveSummary, b: &CurveSummary) -> Result<f64> {
    if a.method != b.method || a.grid != b.grid || a.values.len() != b.values.len() {
        return Err(Error::Grid(
            "curves are not on the same method and grid".into(),
        ));
    }
    let diffs: Vec<f64> = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .collect();
    Ok(trapezoid(&diffs, a.grid.step()))
}

pub(crate) fn trapezoid(f: &[f64], step: f64) -> f64 {
    match f.len() {
        0 | 1 => 0.0,
        n => step * (0.5 * (f[0] + f[n - 1]) + f[1..n - 1].iter().sum::<f64>()),
    }
}

/// `Σ_k |s_k - s'_k|`.
pub fn distance_vector(a: &TripletSummary, b: &TripletSummary) -> Result<f64> {
    if a.theta_bar.len() != b.theta_bar.len() {
        return Err(Error::Dimension(format!(
            "summaries have {} and {} clusters",
            a.theta_bar.len(),
            b.theta_bar.len()
        )));
    }
    Ok(a.theta_bar
        .iter()
        .zip(&b.theta_bar)
        .map(|(x, y)| (x - y).abs())
        .sum())
}

/// Computes the configured summary of simulated or observed panels on a
/// fixed design.
#[derive(Debug, Clone)]
pub struct Summarizer {
    method: SummaryMethod,
    family: Family,
    design: Arc<SpatialDesign>,
    clustering: Option<Arc<TripletClustering>>,
}

impl Summarizer {
    /// A madogram or pairwise curve summarizer.
    pub fn curve(
        method: SummaryMethod,
        family: Family,
        design: Arc<SpatialDesign>,
    ) -> Result<Self> {
        if method == SummaryMethod::TripletTheta {
            return Err(Error::Parameter(
                "use Summarizer::triplet for the triplet method".into(),
            ));
        }
        Ok(Self {
            method,
            family,
            design,
            clustering: None,
        })
    }

    pub fn triplet(
        design: Arc<SpatialDesign>,
        clustering: Arc<TripletClustering>,
        family: Family,
    ) -> Result<Self> {
        if !clustering.matches(&design) {
            return Err(Error::Design(
                "clustering was built on a different design".into(),
            ));
        }
        Ok(Self {
            method: SummaryMethod::TripletTheta,
            family,
            design,
            clustering: Some(clustering),
        })
    }

    /// Builds the summarizer for `method`, clustering the design into `k`
    /// groups for the triplet method.
    pub fn build(
        method: SummaryMethod,
        family: Family,
        design: Arc<SpatialDesign>,
        k: usize,
    ) -> Result<Self> {
        match method {
            SummaryMethod::TripletTheta => {
                let clustering = Arc::new(ward_cluster(&design, k)?);
                Self::triplet(design, clustering, family)
            }
            _ => Self::curve(method, family, design),
        }
    }

    pub fn method(&self) -> SummaryMethod {
        self.method
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn design(&self) -> &Arc<SpatialDesign> {
        &self.design
    }

    pub fn clustering(&self) -> Option<&Arc<TripletClustering>> {
        self.clustering.as_ref()
    }

    pub fn summarize(&self, panel: &BlockMaximaPanel) -> Result<SummaryVector> {
        if !Arc::ptr_eq(panel.design(), &self.design) && **panel.design() != *self.design {
            return Err(Error::Design(
                "panel and summarizer use different designs".into(),
            ));
        }
        match &self.clustering {
            Some(c) => summarize_triplet(panel, c).map(SummaryVector::Triplet),
            None => ols_fit_curve(self.method, panel, self.family).map(SummaryVector::Curve),
        }
    }
}
