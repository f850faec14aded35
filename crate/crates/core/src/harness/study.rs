use super::mse::{mse_domain, MseDomain};
use crate::abc::{
    abc_adaptive, abc_rejection, credible_band, posterior_mean_curve, AbcSettings, PriorSpec,
};
use crate::corrfuncs::{CorrelationModel, Family, ParamPoint};
use crate::error::{Error, Result};
use crate::maxstable::{SchlatherSimulator, SpatialDesign, DEFAULT_TRUNCATION_BOUND};
use crate::mcle::mcle_fit;
use crate::rng::{child_seed, labeled_seed, substream};
use crate::summaries::{ward_cluster, Summarizer, SummaryMethod, TripletClustering};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// An estimator of the correlation curve compared in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Estimator {
    Abc(SummaryMethod),
    Aabc(SummaryMethod),
    Mcle,
}

impl Estimator {
    pub fn method(&self) -> Option<SummaryMethod> {
        match self {
            Estimator::Abc(m) | Estimator::Aabc(m) => Some(*m),
            Estimator::Mcle => None,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Abc(m) => write!(f, "abc-{m}"),
            Estimator::Aabc(m) => write!(f, "aabc-{m}"),
            Estimator::Mcle => f.write_str("mcle"),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "mcle" {
            return Ok(Estimator::Mcle);
        }
        if let Some(m) = s.strip_prefix("aabc-") {
            return Ok(Estimator::Aabc(m.parse()?));
        }
        if let Some(m) = s.strip_prefix("abc-") {
            return Ok(Estimator::Abc(m.parse()?));
        }
        Err(Error::Config(format!("unknown estimator '{s}'")))
    }
}

impl TryFrom<String> for Estimator {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Estimator> for String {
    fn from(e: Estimator) -> Self {
        e.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyModel {
    pub label: String,
    #[serde(default = "default_family")]
    pub family: Family,
    pub c2: f64,
    pub nu: f64,
}

fn default_family() -> Family {
    Family::WhittleMatern
}

impl StudyModel {
    pub fn model(&self) -> Result<CorrelationModel> {
        CorrelationModel::from_point(self.family, ParamPoint::new(self.c2, self.nu))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbcStudySettings {
    pub iterations: usize,
    pub stage2_iterations: usize,
    pub percentile: f64,
    pub clusters: usize,
    pub prior: PriorSpec,
    pub band_level: f64,
}

impl Default for AbcStudySettings {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            stage2_iterations: 20_000,
            percentile: 0.005,
            clusters: 50,
            prior: PriorSpec::default(),
            band_level: 0.95,
        }
    }
}

/// A simulation study: for every model and replicate, sites are drawn
/// uniformly on `[0, side]²`, a truth panel is simulated and each estimator
/// is scored by the integrated squared error of its correlation curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub seed: u64,
    pub n_blocks: usize,
    pub n_sites: usize,
    #[serde(default = "default_side")]
    pub side: f64,
    pub replicates: usize,
    #[serde(default = "default_bound")]
    pub truncation_bound: f64,
    pub estimators: Vec<Estimator>,
    pub models: Vec<StudyModel>,
    #[serde(default)]
    pub abc: AbcStudySettings,
}

fn default_side() -> f64 {
    10.0
}

fn default_bound() -> f64 {
    DEFAULT_TRUNCATION_BOUND
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_blocks == 0 || self.replicates == 0 {
            return bad("n_blocks and replicates must be positive".into());
        }
        if self.n_sites < 2 {
            return bad(format!("n_sites must be at least 2, got {}", self.n_sites));
        }
        if !(self.side > 0.0) || !self.side.is_finite() {
            return bad(format!("side must be positive, got {}", self.side));
        }
        SchlatherSimulator::with_bound(self.truncation_bound)?;
        if self.models.is_empty() || self.estimators.is_empty() {
            return bad("a study needs at least one model and one estimator".into());
        }
        let mut labels = HashSet::new();
        for m in &self.models {
            if !labels.insert(m.label.as_str()) {
                return bad(format!("duplicated model label '{}'", m.label));
            }
            m.model()
                .map_err(|e| Error::Config(format!("model '{}': {e}", m.label)))?;
        }
        let mut seen = HashSet::new();
        for e in &self.estimators {
            if !seen.insert(*e) {
                return bad(format!("duplicated estimator '{e}'"));
            }
        }
        let abc = &self.abc;
        if self.estimators.iter().any(|e| e.method().is_some()) {
            if !(abc.percentile > 0.0 && abc.percentile <= 1.0) {
                return bad(format!(
                    "abc.percentile must lie in (0, 1], got {}",
                    abc.percentile
                ));
            }
            if !(0.0..1.0).contains(&abc.band_level) {
                return bad(format!(
                    "abc.band_level must lie in [0, 1), got {}",
                    abc.band_level
                ));
            }
        }
        if self
            .estimators
            .iter()
            .any(|e| matches!(e, Estimator::Abc(_)))
            && abc.iterations < 100
        {
            return bad(format!(
                "abc.iterations must be at least 100, got {}",
                abc.iterations
            ));
        }
        if self
            .estimators
            .iter()
            .any(|e| matches!(e, Estimator::Aabc(_)))
            && (abc.iterations < 1000 || abc.stage2_iterations < 1000)
        {
            return bad("adaptive ABC needs at least 1000 iterations per stage".into());
        }
        if self
            .estimators
            .iter()
            .any(|e| e.method() == Some(SummaryMethod::TripletTheta))
        {
            let d = self.n_sites;
            let n = d * (d - 1) * d.saturating_sub(2) / 6;
            if d < 3 || abc.clusters == 0 || abc.clusters > n {
                return bad(format!("abc.clusters must lie in 1..={n} for {d} sites"));
            }
        }
        Ok(())
    }
}

/// Outcome of one estimator on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub model: String,
    pub replicate: usize,
    pub estimator: String,
    pub mse: Option<f64>,
    pub h_star: f64,
    pub truncated: bool,
    /// Fraction of the integration grid inside the pointwise credible band.
    pub band_coverage: Option<f64>,
    /// Point estimate: the MCLE or the weighted posterior mean.
    pub c2: Option<f64>,
    pub nu: Option<f64>,
    pub epsilon: Option<f64>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: String,
    pub estimator: String,
    pub runs: usize,
    pub failures: usize,
    pub mean_mse: Option<f64>,
    /// Standard error of the mean across replicates.
    pub se_mse: Option<f64>,
    pub mean_band_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub rows: Vec<RunRow>,
    pub summaries: Vec<ModelSummary>,
}

impl StudyReport {
    pub fn summary(&self, model: &str, estimator: Estimator) -> Option<&ModelSummary> {
        let name = estimator.to_string();
        self.summaries
            .iter()
            .find(|s| s.model == model && s.estimator == name)
    }
}

/// Seed of replicate `r` of the model labelled `label`.
pub fn replicate_seed(master: u64, label: &str, r: usize) -> u64 {
    child_seed(labeled_seed(master, label), r as u64)
}

/// Data shared by every estimator of one replicate.
pub struct Replicate {
    pub design: Arc<SpatialDesign>,
    pub panel: crate::maxstable::BlockMaximaPanel,
    pub truth: CorrelationModel,
    pub domain: MseDomain,
    pub seed: u64,
}

pub fn generate_replicate(config: &StudyConfig, model: &StudyModel, r: usize) -> Result<Replicate> {
    let seed = replicate_seed(config.seed, &model.label, r);
    let mut site_rng = substream(labeled_seed(seed, "sites"), 0);
    let design = Arc::new(SpatialDesign::uniform_square(
        config.n_sites,
        config.side,
        &mut site_rng,
    )?);
    let truth = model.model()?;
    let simulator = SchlatherSimulator::with_bound(config.truncation_bound)?;
    let panel = simulator.simulate(&design, &truth, config.n_blocks, labeled_seed(seed, "data"))?;
    let domain = mse_domain(&truth, design.max_distance())?;
    Ok(Replicate {
        design,
        panel,
        truth,
        domain,
        seed,
    })
}

fn run_estimator(
    config: &StudyConfig,
    rep: &Replicate,
    estimator: Estimator,
    clustering: &mut Option<Arc<TripletClustering>>,
    row: &mut RunRow,
) -> Result<()> {
    let family = rep.truth.family();
    let seed = labeled_seed(rep.seed, &estimator.to_string());
    let Some(method) = estimator.method() else {
        let fit = mcle_fit(&rep.panel, family)?;
        let model = CorrelationModel::from_point(family, fit.phi_hat)?;
        let curve: Vec<f64> = rep.domain.grid.iter().map(|&h| model.rho(h)).collect();
        row.mse = Some(rep.domain.mse(&rep.truth, &curve)?);
        row.c2 = Some(fit.phi_hat.c2);
        row.nu = Some(fit.phi_hat.nu);
        row.converged = Some(fit.converged);
        return Ok(());
    };
    let summarizer = match method {
        SummaryMethod::TripletTheta => {
            if clustering.is_none() {
                *clustering = Some(Arc::new(ward_cluster(&rep.design, config.abc.clusters)?));
            }
            Summarizer::triplet(rep.design.clone(), clustering.clone().unwrap(), family)?
        }
        _ => Summarizer::curve(method, family, rep.design.clone())?,
    };
    let observed = summarizer.summarize(&rep.panel)?;
    let mut settings = AbcSettings::new(config.n_blocks, config.abc.prior, config.abc.percentile);
    settings.simulator = SchlatherSimulator::with_bound(config.truncation_bound)?;
    let posterior = match estimator {
        Estimator::Abc(_) => abc_rejection(
            &observed,
            &summarizer,
            &settings,
            config.abc.iterations,
            seed,
        )?,
        _ => abc_adaptive(
            &observed,
            &summarizer,
            &settings,
            config.abc.iterations,
            config.abc.stage2_iterations,
            seed,
        )?,
    };
    let curve = posterior_mean_curve(&posterior, family, &rep.domain.grid)?;
    row.mse = Some(rep.domain.mse(&rep.truth, &curve)?);
    let mean = posterior.mean();
    row.c2 = Some(mean.c2);
    row.nu = Some(mean.nu);
    row.epsilon = Some(posterior.epsilon);
    match credible_band(&posterior, family, &rep.domain.grid, config.abc.band_level) {
        Ok(band) => {
            row.band_coverage = Some(rep.domain.coverage(&rep.truth, &band.lower, &band.upper))
        }
        Err(e) => log::warn!("no credible band for {estimator}: {e}"),
    }
    Ok(())
}

fn run_replicate(config: &StudyConfig, model: &StudyModel, r: usize) -> Vec<RunRow> {
    let blank = |estimator: Estimator| RunRow {
        model: model.label.clone(),
        replicate: r,
        estimator: estimator.to_string(),
        mse: None,
        h_star: f64::NAN,
        truncated: false,
        band_coverage: None,
        c2: None,
        nu: None,
        epsilon: None,
        converged: None,
        error: None,
    };
    let rep = match generate_replicate(config, model, r) {
        Ok(rep) => rep,
        Err(e) => {
            log::error!("model {} replicate {r}: {e}", model.label);
            return config
                .estimators
                .iter()
                .map(|&est| RunRow {
                    error: Some(e.to_string()),
                    ..blank(est)
                })
                .collect();
        }
    };
    let mut clustering = None;
    config
        .estimators
        .iter()
        .map(|&est| {
            let mut row = RunRow {
                h_star: rep.domain.h_star,
                truncated: rep.domain.truncated,
                ..blank(est)
            };
            if let Err(e) = run_estimator(config, &rep, est, &mut clustering, &mut row) {
                log::error!("model {} replicate {r} {est}: {e}", model.label);
                row.error = Some(e.to_string());
            }
            log::info!(
                "model {} replicate {r} {est}: mse {:?}",
                model.label,
                row.mse
            );
            row
        })
        .collect()
}

fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

/// Runs every model × replicate × estimator. Failed runs are recorded in
/// their row and the study continues.
pub fn run_simulation_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.models.len())
        .flat_map(|m| (0..config.replicates).map(move |r| (m, r)))
        .collect();
    let rows: Vec<RunRow> = jobs
        .par_iter()
        .map(|&(m, r)| run_replicate(config, &config.models[m], r))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut grouped: BTreeMap<(usize, usize), Vec<&RunRow>> = BTreeMap::new();
    for row in &rows {
        let m = config
            .models
            .iter()
            .position(|x| x.label == row.model)
            .unwrap_or(0);
        let e = config
            .estimators
            .iter()
            .position(|x| x.to_string() == row.estimator)
            .unwrap_or(0);
        grouped.entry((m, e)).or_default().push(row);
    }
    let summaries = grouped
        .into_iter()
        .map(|((m, e), group)| {
            let mses: Vec<f64> = group.iter().filter_map(|r| r.mse).collect();
            let coverage: Vec<f64> = group.iter().filter_map(|r| r.band_coverage).collect();
            let (mean_mse, se_mse) = mean_se(&mses);
            ModelSummary {
                model: config.models[m].label.clone(),
                estimator: config.estimators[e].to_string(),
                runs: group.len(),
                failures: group.len() - mses.len(),
                mean_mse,
                se_mse,
                mean_band_coverage: mean_se(&coverage).0,
            }
        })
        .collect();
    Ok(StudyReport {
        config: config.clone(),
        rows,
        summaries,
    })
}
