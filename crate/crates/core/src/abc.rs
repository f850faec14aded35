//! Rejection and two-stage adaptive approximate Bayesian computation over
//! the range and smoothness of the correlation function.

use crate::corrfuncs::{CorrelationModel, Family, ParamPoint};
use crate::error::{Error, Result};
use crate::maxstable::SchlatherSimulator;
use crate::rng::{labeled_seed, substream, StreamRng};
use crate::summaries::{Summarizer, SummaryMethod, SummaryVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Independent uniform priors on the range and smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub c2: (f64, f64),
    pub nu: (f64, f64),
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            c2: (0.0, 10.0),
            nu: (0.0, 10.0),
        }
    }
}

impl PriorSpec {
    pub fn new(c2: (f64, f64), nu: (f64, f64)) -> Result<Self> {
        for (name, (lo, hi)) in [("c2", c2), ("nu", nu)] {
            if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::Parameter(format!(
                    "prior bounds for {name} must satisfy 0 ≤ lo < hi, got {lo}:{hi}"
                )));
            }
        }
        Ok(Self { c2, nu })
    }

    /// Clips the smoothness bound to the family's parameter space.
    pub fn for_family(self, family: Family) -> Result<Self> {
        let hi = self.nu.1.min(family.max_smooth());
        Self::new(self.c2, (self.nu.0, hi))
    }

    pub fn contains(&self, phi: ParamPoint) -> bool {
        phi.c2 > self.c2.0 && phi.c2 < self.c2.1 && phi.nu > self.nu.0 && phi.nu < self.nu.1
    }

    pub fn mean(&self) -> ParamPoint {
        ParamPoint::new(0.5 * (self.c2.0 + self.c2.1), 0.5 * (self.nu.0 + self.nu.1))
    }

    /// A draw from the open box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamPoint {
        let open = |rng: &mut R, (lo, hi): (f64, f64)| loop {
            let v = lo + (hi - lo) * rng.random::<f64>();
            if v > lo && v < hi {
                return v;
            }
        };
        let c2 = open(rng, self.c2);
        let nu = open(rng, self.nu);
        ParamPoint::new(c2, nu)
    }
}

impl FromStr for PriorSpec {
    type Err = Error;

    /// Parses `c2=lo:hi,nu=lo:hi`.
    fn from_str(s: &str) -> Result<Self> {
        let mut c2 = None;
        let mut nu = None;
        for part in s.split(',') {
            let (key, range) = part.split_once('=').ok_or_else(|| {
                Error::Parameter(format!("prior entry '{part}' is not key=lo:hi"))
            })?;
            let (lo, hi) = range
                .split_once(':')
                .ok_or_else(|| Error::Parameter(format!("prior range '{range}' is not lo:hi")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("invalid prior bound '{v}'")))
            };
            let bounds = (parse(lo)?, parse(hi)?);
            match key.trim() {
                "c2" => c2 = Some(bounds),
                "nu" => nu = Some(bounds),
                other => {
                    return Err(Error::Parameter(format!(
                        "unknown prior parameter '{other}'"
                    )))
                }
            }
        }
        match (c2, nu) {
            (Some(c2), Some(nu)) => Self::new(c2, nu),
            _ => Err(Error::Parameter("prior needs both c2 and nu".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbcCandidate {
    pub phi: ParamPoint,
    pub distance: f64,
    pub weight: f64,
    /// Index of the iteration that produced the candidate.
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Rejection,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub iterations: usize,
    pub stage1_iterations: Option<usize>,
    /// Particles kept by the first stage of an adaptive run.
    #[serde(default)]
    pub stage1_accepted: Option<usize>,
    pub method: SummaryMethod,
    pub family: Family,
    pub clusters: Option<usize>,
    pub n_blocks: usize,
    pub prior: PriorSpec,
    /// Mutation covariance of the adaptive stage.
    pub kernel: Option<[[f64; 2]; 2]>,
}

/// Weighted particles accepted by an ABC run. Weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub particles: Vec<AbcCandidate>,
    pub epsilon: f64,
    pub percentile: f64,
    pub stage: Stage,
    pub provenance: Provenance,
}

impl PosteriorSample {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    /// Weighted mean of the parameters.
    pub fn mean(&self) -> ParamPoint {
        let total: f64 = self.particles.iter().map(|p| p.weight).sum();
        let (c2, nu) = self.particles.iter().fold((0.0, 0.0), |(a, b), p| {
            (a + p.weight * p.phi.c2, b + p.weight * p.phi.nu)
        });
        ParamPoint::new(c2 / total, nu / total)
    }
}

/// `⌈p·I⌉`, reading products within `1e-9` of an integer as that integer.
pub fn accepted_count(percentile: f64, iterations: usize) -> usize {
    let x = percentile * iterations as f64;
    let r = x.round();
    let m = if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r
    } else {
        x.ceil()
    };
    (m as usize).clamp(1, iterations)
}

/// Run settings shared by the rejection and adaptive samplers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcSettings {
    pub n_blocks: usize,
    pub prior: PriorSpec,
    pub percentile: f64,
    pub simulator: SchlatherSimulator,
    /// Attempts per iteration after a failed simulation or summary.
    pub max_retries: usize,
}

impl AbcSettings {
    pub fn new(n_blocks: usize, prior: PriorSpec, percentile: f64) -> Self {
        Self {
            n_blocks,
            prior,
            percentile,
            simulator: SchlatherSimulator::default(),
            max_retries: 10,
        }
    }
}

const MAX_MUTATION_REDRAWS: usize = 100_000;

struct Engine<'a> {
    observed: &'a SummaryVector,
    summarizer: &'a Summarizer,
    settings: &'a AbcSettings,
    prior: PriorSpec,
}

impl<'a> Engine<'a> {
    fn new(
        observed: &'a SummaryVector,
        summarizer: &'a Summarizer,
        settings: &'a AbcSettings,
    ) -> Result<Self> {
        if observed.method() != summarizer.method() {
            return Err(Error::Parameter(format!(
                "observed summary uses the {} method but the summarizer uses {}",
                observed.method(),
                summarizer.method()
            )));
        }
        if let (SummaryVector::Triplet(t), Some(c)) = (observed, summarizer.clustering()) {
            if t.theta_bar.len() != c.k() {
                return Err(Error::Dimension(format!(
                    "observed summary has {} clusters, clustering has {}",
                    t.theta_bar.len(),
                    c.k()
                )));
            }
        }
        let p = settings.percentile;
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Parameter(format!(
                "percentile must lie in (0, 1], got {p}"
            )));
        }
        if settings.n_blocks == 0 {
            return Err(Error::Parameter("n_blocks must be at least 1".into()));
        }
        let prior = settings.prior.for_family(summarizer.family())?;
        Ok(Self {
            observed,
            summarizer,
            settings,
            prior,
        })
    }

    /// Proposes, simulates and scores one candidate. Failed simulations or
    /// summaries are logged and the proposal redrawn from the same stream.
    fn iterate<P>(&self, iteration: usize, rng: &mut StreamRng, propose: P) -> Result<AbcCandidate>
    where
        P: Fn(&mut StreamRng) -> Result<ParamPoint>,
    {
        let family = self.summarizer.family();
        let mut last = None;
        for attempt in 0..=self.settings.max_retries {
            let phi = propose(rng)?;
            let sim_seed = rng.next_u64();
            let outcome = CorrelationModel::from_point(family, phi).and_then(|model| {
                let panel = self.settings.simulator.simulate(
                    self.summarizer.design(),
                    &model,
                    self.settings.n_blocks,
                    sim_seed,
                )?;
                self.observed.distance(&self.summarizer.summarize(&panel)?)
            });
            match outcome {
                Ok(distance) if distance.is_finite() => {
                    return Ok(AbcCandidate {
                        phi,
                        distance,
                        weight: 1.0,
                        iteration,
                    });
                }
                Ok(distance) => {
                    log::warn!("iteration {iteration}, attempt {attempt}: non-finite distance {distance}; redrawing");
                    last = Some(Error::Domain(format!(
                        "non-finite distance at ({}, {})",
                        phi.c2, phi.nu
                    )));
                }
                Err(
                    e @ (Error::SimulationBudget(_)
                    | Error::Factorization(_)
                    | Error::FitFailure { .. }),
                ) => {
                    log::warn!(
                        "iteration {iteration}, attempt {attempt} at ({}, {}): {e}; redrawing",
                        phi.c2,
                        phi.nu
                    );
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::SimulationBudget(format!(
            "iteration {iteration} failed {} times; last error: {}",
            self.settings.max_retries + 1,
            last.map_or_else(String::new, |e| e.to_string())
        )))
    }

    fn run<P>(&self, iterations: usize, seed: u64, propose: P) -> Result<Vec<AbcCandidate>>
    where
        P: Fn(&mut StreamRng) -> Result<ParamPoint> + Sync,
    {
        (0..iterations)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i as u64);
                self.iterate(i, &mut rng, &propose)
            })
            .collect()
    }
}

/// Keeps the `⌈p·I⌉` candidates of smallest distance, ties broken by
/// iteration index. Returns them with the realized threshold.
fn select(mut candidates: Vec<AbcCandidate>, percentile: f64) -> (Vec<AbcCandidate>, f64) {
    let m = accepted_count(percentile, candidates.len());
    candidates.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.iteration.cmp(&b.iteration))
    });
    candidates.truncate(m);
    let epsilon = candidates.last().map_or(0.0, |c| c.distance);
    (candidates, epsilon)
}

fn provenance(
    summarizer: &Summarizer,
    settings: &AbcSettings,
    prior: PriorSpec,
    seed: u64,
    iterations: usize,
) -> Provenance {
    Provenance {
        seed,
        iterations,
        stage1_iterations: None,
        stage1_accepted: None,
        method: summarizer.method(),
        family: summarizer.family(),
        clusters: summarizer.clustering().map(|c| c.k()),
        n_blocks: settings.n_blocks,
        prior,
        kernel: None,
    }
}

/// Rejection ABC: `iterations` prior draws, each simulated at the
/// summarizer's design and scored against `observed`.
pub fn abc_rejection(
    observed: &SummaryVector,
    summarizer: &Summarizer,
    settings: &AbcSettings,
    iterations: usize,
    seed: u64,
) -> Result<PosteriorSample> {
    if iterations < 100 {
        return Err(Error::Parameter(format!(
            "rejection ABC needs at least 100 iterations, got {iterations}"
        )));
    }
    let engine = Engine::new(observed, summarizer, settings)?;
    let prior = engine.prior;
    let candidates = engine.run(iterations, seed, |rng| Ok(prior.sample(rng)))?;
    let (mut particles, epsilon) = select(candidates, settings.percentile);
    let w = 1.0 / particles.len() as f64;
    particles.iter_mut().for_each(|p| p.weight = w);
    Ok(PosteriorSample {
        particles,
        epsilon,
        percentile: settings.percentile,
        stage: Stage::Rejection,
        provenance: provenance(summarizer, settings, prior, seed, iterations),
    })
}

/// Twice the sample covariance of the particles, with the diagonal inflated
/// by `1e-8` when it is singular.
pub fn mutation_covariance(particles: &[ParamPoint]) -> [[f64; 2]; 2] {
    let n = particles.len() as f64;
    let (sc, sn) = particles
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.c2, b + p.nu));
    let (mc, mn) = (sc / n, sn / n);
    let mut cov = [[0.0; 2]; 2];
    if particles.len() > 1 {
        for p in particles {
            let (dc, dn) = (p.c2 - mc, p.nu - mn);
            cov[0][0] += dc * dc;
            cov[0][1] += dc * dn;
            cov[1][1] += dn * dn;
        }
        let scale = 2.0 / (n - 1.0);
        cov[0][0] *= scale;
        cov[0][1] *= scale;
        cov[1][1] *= scale;
    }
    cov[1][0] = cov[0][1];
    if cholesky2(&cov).is_none() {
        log::warn!(
            "stage-1 particles are degenerate; inflating the mutation covariance diagonal by 1e-8"
        );
        cov[0][0] += 1e-8;
        cov[1][1] += 1e-8;
    }
    cov
}

/// Lower Cholesky factor `[l00, l10, l11]` of a 2×2 covariance.
fn cholesky2(c: &[[f64; 2]; 2]) -> Option<[f64; 3]> {
    if !(c[0][0] > 0.0) {
        return None;
    }
    let l00 = c[0][0].sqrt();
    let l10 = c[1][0] / l00;
    let r = c[1][1] - l10 * l10;
    if !(r > 0.0) || !(r > 1e-14 * c[1][1]) {
        return None;
    }
    Some([l00, l10, r.sqrt()])
}

/// Importance weights `w_m ∝ 1 / Σ_j N(φ⁽²⁾_m | φ⁽¹⁾_j, Ω) / J`, normalized
/// to sum to one.
pub fn aabc_weights(
    stage1: &[ParamPoint],
    omega: &[[f64; 2]; 2],
    stage2: &[ParamPoint],
) -> Result<Vec<f64>> {
    if stage1.is_empty() || stage2.is_empty() {
        return Err(Error::EmptySample(
            "importance weights need particles in both stages".into(),
        ));
    }
    let l = cholesky2(omega)
        .ok_or_else(|| Error::Factorization("mutation covariance is singular".into()))?;
    // log mixture density up to a shared constant
    let log_q: Vec<f64> = stage2
        .iter()
        .map(|p| {
            let terms: Vec<f64> = stage1
                .iter()
                .map(|q| {
                    let u = (p.c2 - q.c2) / l[0];
                    let v = (p.nu - q.nu - l[1] * u) / l[2];
                    -0.5 * (u * u + v * v)
                })
                .collect();
            let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
        })
        .collect();
    let min = log_q.iter().cloned().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = log_q.iter().map(|q| (min - q).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.iter().map(|w| w / total).collect())
}

/// Two-stage adaptive ABC. Stage 1 is rejection ABC with `stage1_iterations`
/// draws; stage 2 resamples its particles, mutates them with a Gaussian
/// kernel of twice their covariance (redrawing outside the prior) and
/// importance-weights the survivors.
pub fn abc_adaptive(
    observed: &SummaryVector,
    summarizer: &Summarizer,
    settings: &AbcSettings,
    stage1_iterations: usize,
    stage2_iterations: usize,
    seed: u64,
) -> Result<PosteriorSample> {
    if stage1_iterations < 1000 || stage2_iterations < 1000 {
        return Err(Error::Parameter(format!(
            "adaptive ABC needs at least 1000 iterations per stage, got {stage1_iterations} and {stage2_iterations}"
        )));
    }
    let stage1 = abc_rejection(
        observed,
        summarizer,
        settings,
        stage1_iterations,
        labeled_seed(seed, "stage-1"),
    )?;
    let engine = Engine::new(observed, summarizer, settings)?;
    let prior = engine.prior;
    let anchors: Vec<ParamPoint> = stage1.particles.iter().map(|p| p.phi).collect();
    let omega = mutation_covariance(&anchors);
    let l = cholesky2(&omega)
        .ok_or_else(|| Error::Factorization("mutation covariance is singular".into()))?;

    let propose = |rng: &mut StreamRng| {
        let anchor = anchors[rng.random_range(0..anchors.len())];
        for _ in 0..MAX_MUTATION_REDRAWS {
            let (e0, e1): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            let phi = ParamPoint::new(anchor.c2 + l[0] * e0, anchor.nu + l[1] * e0 + l[2] * e1);
            if prior.contains(phi) {
                return Ok(phi);
            }
        }
        Err(Error::SimulationBudget(format!(
            "mutation kernel left the prior support {MAX_MUTATION_REDRAWS} times from ({}, {})",
            anchor.c2, anchor.nu
        )))
    };
    let candidates = engine.run(stage2_iterations, labeled_seed(seed, "stage-2"), propose)?;
    let (mut particles, epsilon) = select(candidates, settings.percentile);
    let accepted: Vec<ParamPoint> = particles.iter().map(|p| p.phi).collect();
    let weights = aabc_weights(&anchors, &omega, &accepted)?;
    for (p, w) in particles.iter_mut().zip(weights) {
        p.weight = w;
    }
    let mut prov = provenance(summarizer, settings, prior, seed, stage2_iterations);
    prov.stage1_iterations = Some(stage1_iterations);
    prov.stage1_accepted = Some(anchors.len());
    prov.kernel = Some(omega);
    Ok(PosteriorSample {
        particles,
        epsilon,
        percentile: settings.percentile,
        stage: Stage::Adaptive,
        provenance: prov,
    })
}

fn particle_curves(
    sample: &PosteriorSample,
    family: Family,
    grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if sample.is_empty() {
        return Err(Error::EmptySample(
            "posterior sample has no particles".into(),
        ));
    }
    sample
        .particles
        .iter()
        .map(|p| {
            let m = CorrelationModel::from_point(family, p.phi)?;
            Ok(grid.iter().map(|&h| m.rho(h)).collect())
        })
        .collect()
}

fn normalized_weights(sample: &PosteriorSample) -> Result<Vec<f64>> {
    let total: f64 = sample.particles.iter().map(|p| p.weight).sum();
    if !(total > 0.0) || sample.particles.iter().any(|p| !(p.weight >= 0.0)) {
        return Err(Error::Parameter(
            "posterior weights must be non-negative with a positive sum".into(),
        ));
    }
    Ok(sample.particles.iter().map(|p| p.weight / total).collect())
}

/// `ρ̂(h) = Σ_m w_m ρ(h; φ_m)` on `grid`.
pub fn posterior_mean_curve(
    sample: &PosteriorSample,
    family: Family,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let curves = particle_curves(sample, family, grid)?;
    let w = normalized_weights(sample)?;
    Ok((0..grid.len())
        .map(|g| curves.iter().zip(&w).map(|(c, w)| w * c[g]).sum())
        .collect())
}

/// Pointwise equal-tailed credible band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CredibleBand {
    pub level: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Smallest value whose cumulative weight reaches `q`.
fn weighted_quantile(sorted: &[(f64, f64)], q: f64) -> f64 {
    let mut cum = 0.0;
    for &(v, w) in sorted {
        cum += w;
        if cum >= q - 1e-12 {
            return v;
        }
    }
    sorted.last().map_or(f64::NAN, |s| s.0)
}

/// Weighted `(1-level)/2` and `(1+level)/2` quantiles of `ρ(h; φ_m)` at each
/// grid point. Requires at least `⌈2/(1-level)⌉` particles.
pub fn credible_band(
    sample: &PosteriorSample,
    family: Family,
    grid: &[f64],
    level: f64,
) -> Result<CredibleBand> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::Parameter(format!(
            "credible level must lie in [0, 1), got {level}"
        )));
    }
    let needed = (2.0 / (1.0 - level) - 1e-9).ceil() as usize;
    if sample.len() < needed {
        return Err(Error::EmptySample(format!(
            "a {level} band needs at least {needed} particles, got {}",
            sample.len()
        )));
    }
    let curves = particle_curves(sample, family, grid)?;
    let w = normalized_weights(sample)?;
    let (qlo, qhi) = (0.5 * (1.0 - level), 0.5 * (1.0 + level));
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut column: Vec<(f64, f64)> = Vec::with_capacity(curves.len());
    for g in 0..grid.len() {
        column.clear();
        column.extend(curves.iter().zip(&w).map(|(c, &w)| (c[g], w)));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        lower.push(weighted_quantile(&column, qlo));
        upper.push(weighted_quantile(&column, qhi));
    }
    Ok(CredibleBand {
        level,
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests;
