use crate::abc::PosteriorSample;
use crate::corrfuncs::{CorrelationModel, Family};
use crate::error::{Error, Result};
use crate::margins::{frechet_to_gev, GevParams};
use crate::maxstable::{SchlatherSimulator, SpatialDesign};
use crate::rng::substream;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSettings {
    pub family: Family,
    pub thresholds: Vec<f64>,
    pub n_sims: usize,
    /// Margins describe negated minima; simulated values are negated back
    /// and a site is exposed when it falls below a threshold.
    pub minima: bool,
    pub simulator: SchlatherSimulator,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSummary {
    pub threshold: f64,
    pub mean_total: f64,
    pub mean_count: f64,
    /// Fraction of simulations with no exposed site.
    pub none: f64,
    /// Fraction of simulations with every site exposed.
    pub all: f64,
    /// Fraction of simulations with partial exposure.
    pub intermediate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExposureReport {
    pub thresholds: Vec<f64>,
    pub n_sims: usize,
    pub minima: bool,
    pub total_weight: f64,
    /// Exposed weight per threshold and simulation.
    pub totals: Vec<Vec<f64>>,
    /// Exposed site count per threshold and simulation.
    pub counts: Vec<Vec<usize>>,
    /// Simulations in which the margin inversion failed, per site.
    pub inversion_failures: Vec<usize>,
    pub summaries: Vec<ThresholdSummary>,
}

/// Picks a particle index with probability proportional to its weight.
fn resample(cumulative: &[f64], u: f64) -> usize {
    let target = u * cumulative[cumulative.len() - 1];
    cumulative
        .partition_point(|&c| c <= target)
        .min(cumulative.len() - 1)
}

/// Posterior-predictive exposure: each simulation resamples `φ`, simulates
/// one Schlather block at the target sites, maps it to the data scale with
/// the per-site GEV margins and totals the weight of sites beyond each
/// threshold.
pub fn predict_exposure(
    posterior: &PosteriorSample,
    target: &Arc<SpatialDesign>,
    margins: &[GevParams],
    weights: &[f64],
    settings: &ExposureSettings,
) -> Result<ExposureReport> {
    let d = target.len();
    if posterior.is_empty() {
        return Err(Error::EmptySample(
            "posterior sample has no particles".into(),
        ));
    }
    if margins.len() != d || weights.len() != d {
        return Err(Error::Dimension(format!(
            "{d} target sites but {} margins and {} weights",
            margins.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Parameter(
            "exposure weights must be finite and non-negative".into(),
        ));
    }
    if settings.n_sims == 0 || settings.thresholds.is_empty() {
        return Err(Error::Parameter(
            "need at least one simulation and one threshold".into(),
        ));
    }
    let mut cumulative = Vec::with_capacity(posterior.len());
    let mut acc = 0.0;
    for p in &posterior.particles {
        if !(p.weight >= 0.0) {
            return Err(Error::Parameter(
                "posterior weights must be non-negative".into(),
            ));
        }
        acc += p.weight;
        cumulative.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::Parameter("posterior weights sum to zero".into()));
    }

    let sims: Vec<Vec<Option<f64>>> = (0..settings.n_sims)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(settings.seed, s as u64);
            let phi = posterior.particles[resample(&cumulative, rng.random::<f64>())].phi;
            let model = CorrelationModel::from_point(settings.family, phi)?;
            let block = settings
                .simulator
                .simulate(target, &model, 1, rng.next_u64())?;
            Ok(block
                .row(0)
                .iter()
                .zip(margins)
                .map(|(&z, m)| {
                    let y = frechet_to_gev(m, z);
                    let y = if settings.minima { -y } else { y };
                    y.is_finite().then_some(y)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut inversion_failures = vec![0usize; d];
    for sim in &sims {
        for (j, v) in sim.iter().enumerate() {
            if v.is_none() {
                inversion_failures[j] += 1;
            }
        }
    }
    if let Some(j) = inversion_failures.iter().position(|&c| c > 0) {
        log::warn!(
            "margin inversion failed at site {} in {} simulations",
            target.sites()[j].id,
            inversion_failures[j]
        );
    }
    let total_weight: f64 = weights.iter().sum();
    let exposed = |v: f64, t: f64| if settings.minima { v < t } else { v > t };
    let mut totals = Vec::with_capacity(settings.thresholds.len());
    let mut counts = Vec::with_capacity(settings.thresholds.len());
    let mut summaries = Vec::with_capacity(settings.thresholds.len());
    let n = settings.n_sims as f64;
    for &t in &settings.thresholds {
        let mut tot = Vec::with_capacity(sims.len());
        let mut cnt = Vec::with_capacity(sims.len());
        for sim in &sims {
            let (mut w, mut c) = (0.0, 0usize);
            for (v, &wt) in sim.iter().zip(weights) {
                if let Some(v) = v {
                    if exposed(*v, t) {
                        w += wt;
                        c += 1;
                    }
                }
            }
            tot.push(w);
            cnt.push(c);
        }
        let none = cnt.iter().filter(|&&c| c == 0).count() as f64 / n;
        let all = cnt.iter().filter(|&&c| c == d).count() as f64 / n;
        summaries.push(ThresholdSummary {
            threshold: t,
            mean_total: tot.iter().sum::<f64>() / n,
            mean_count: cnt.iter().sum::<usize>() as f64 / n,
            none,
            all,
            intermediate: 1.0 - none - all,
        });
        totals.push(tot);
        counts.push(cnt);
    }
    Ok(ExposureReport {
        thresholds: settings.thresholds.clone(),
        n_sims: settings.n_sims,
        minima: settings.minima,
        total_weight,
        totals,
        counts,
        inversion_failures,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abc::{AbcCandidate, PriorSpec, Provenance, Stage};
    use crate::corrfuncs::ParamPoint;
    use crate::summaries::SummaryMethod;

    fn posterior(points: &[(f64, f64)]) -> PosteriorSample {
        let w = 1.0 / points.len() as f64;
        PosteriorSample {
            particles: points
                .iter()
                .enumerate()
                .map(|(i, &(c2, nu))| AbcCandidate {
                    phi: ParamPoint::new(c2, nu),
                    distance: 0.0,
                    weight: w,
                    iteration: i,
                })
                .collect(),
            epsilon: 0.0,
            percentile: 0.01,
            stage: Stage::Rejection,
            provenance: Provenance {
                seed: 0,
                iterations: 100,
                stage1_iterations: None,
                stage1_accepted: None,
                method: SummaryMethod::TripletTheta,
                family: Family::WhittleMatern,
                clusters: Some(10),
                n_blocks: 50,
                prior: PriorSpec::default(),
                kernel: None,
            },
        }
    }

    fn setup(d: usize) -> (Arc<SpatialDesign>, Vec<GevParams>) {
        let mut rng = substream(3, 0);
        let design = Arc::new(SpatialDesign::uniform_square(d, 10.0, &mut rng).unwrap());
        let margins = (0..d)
            .map(|j| GevParams::new(-30.0 + 0.2 * j as f64, 3.0, -0.1).unwrap())
            .collect();
        (design, margins)
    }

    fn settings(thresholds: Vec<f64>, minima: bool) -> ExposureSettings {
        ExposureSettings {
            family: Family::WhittleMatern,
            thresholds,
            n_sims: 400,
            minima,
            simulator: SchlatherSimulator::default(),
            seed: 17,
        }
    }

    #[test]
    fn saturation_examples() {
        let (design, margins) = setup(8);
        let post = posterior(&[(2.0, 1.0), (3.0, 1.5)]);
        let ones = vec![1.0; 8];
        let r = predict_exposure(
            &post,
            &design,
            &margins,
            &ones,
            &settings(vec![-1e9, f64::INFINITY], true),
        )
        .unwrap();
        assert!(r.totals[0].iter().all(|&t| t == 0.0));
        assert!(r.totals[1].iter().all(|&t| t == 8.0));
        let r = predict_exposure(
            &post,
            &design,
            &margins,
            &ones,
            &settings(vec![f64::NEG_INFINITY], false),
        )
        .unwrap();
        assert!(r.counts[0].iter().all(|&c| c == 8));
    }

    #[test]
    fn monotone_and_intermediate() {
        let (design, margins) = setup(8);
        let post = posterior(&[(3.0, 1.0), (4.0, 1.0), (2.5, 2.0)]);
        let weights: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        let thresholds = vec![26.0, 28.0, 30.0, 32.0];
        let r = predict_exposure(
            &post,
            &design,
            &margins,
            &weights,
            &settings(thresholds, true),
        )
        .unwrap();
        for s in 0..r.n_sims {
            for t in 1..r.thresholds.len() {
                assert!(r.totals[t][s] >= r.totals[t - 1][s]);
            }
            assert!(r
                .totals
                .iter()
                .all(|tot| tot[s] >= 0.0 && tot[s] <= r.total_weight));
        }
        let mid = &r.summaries[2];
        assert!(mid.intermediate > 0.0 && mid.intermediate < 1.0, "{mid:?}");
        assert!(r.inversion_failures.iter().all(|&c| c == 0));
        let again = predict_exposure(
            &post,
            &design,
            &margins,
            &weights,
            &settings(r.thresholds.clone(), true),
        )
        .unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn resampling_follows_weights() {
        let cum = [0.0, 0.0, 0.25, 1.0];
        assert_eq!(resample(&cum, 0.0), 2);
        assert_eq!(resample(&cum, 0.2), 2);
        assert_eq!(resample(&cum, 0.25), 3);
        assert_eq!(resample(&cum, 0.999), 3);
    }

    #[test]
    fn dimension_checks() {
        let (design, margins) = setup(5);
        let post = posterior(&[(2.0, 1.0)]);
        assert!(predict_exposure(
            &post,
            &design,
            &margins[..4],
            &[1.0; 5],
            &settings(vec![0.0], true)
        )
        .is_err());
        assert!(predict_exposure(
            &post,
            &design,
            &margins,
            &[1.0; 4],
            &settings(vec![0.0], true)
        )
        .is_err());
        assert!(predict_exposure(
            &posterior(&[]),
            &design,
            &margins,
            &[1.0; 5],
            &settings(vec![0.0], true)
        )
        .is_err());
    }
}
