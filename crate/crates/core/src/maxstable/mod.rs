//! Simulation of Schlather extremal Gaussian processes on a finite design.
//!
//! A block is `Z(x) = max_i s_i · max(0, Y_i(x))`, where `Y_i` are
//! independent standard Gaussian fields and `{s_i}` is a Poisson process
//! with intensity `μ⁻¹ s⁻² ds`, `μ = E max(0, Y) = 1/√(2π)`. Points are
//! generated in decreasing order as `s_i = 1/(μ Γ_i)` from unit-rate arrival
//! times `Γ_i`. The Gaussian spectral function is unbounded, so generation
//! stops once `s_i · bound < min_x Z(x)`: later points could only matter
//! where `Y > bound`.

mod design;
mod panel;

pub use design::{Site, SpatialDesign};
pub use panel::BlockMaximaPanel;

use crate::corrfuncs::{theta_of_rho, CorrelationModel};
use crate::error::{Error, Result};
use crate::margins::MarginScale;
use crate::rng::{substream, StreamRng};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use std::sync::Arc;

/// `E max(0, Y)` for standard normal `Y`.
pub const SPECTRAL_MEAN: f64 = 0.398_942_280_401_432_7;

pub const DEFAULT_TRUNCATION_BOUND: f64 = 4.0;

/// Spectral points allowed per block before giving up.
pub const MAX_SPECTRAL_POINTS: usize = 1_000_000;

const PIVOT_TOL: f64 = 1e-10;
const JITTER: f64 = 1e-10;

/// Draws correlated standard-normal vectors on a design through a lower
/// triangular factor of the correlation matrix.
#[derive(Debug, Clone)]
pub struct GaussianField {
    d: usize,
    /// Row-major lower triangle, `d × d`.
    factor: Vec<f64>,
}

impl GaussianField {
    pub fn new(design: &SpatialDesign, model: &CorrelationModel) -> Result<Self> {
        let d = design.len();
        let mut corr = vec![0.0; d * d];
        for j in 0..d {
            for k in 0..d {
                corr[j * d + k] = if j == k {
                    model.c1()
                } else {
                    model.rho(design.distance(j, k))
                };
            }
        }
        if let Some(factor) = semidefinite_cholesky(&corr, d, 0.0) {
            return Ok(Self { d, factor });
        }
        log::debug!("correlation matrix not numerically PSD; retrying with jitter {JITTER}");
        semidefinite_cholesky(&corr, d, JITTER)
            .map(|factor| Self { d, factor })
            .ok_or_else(|| {
                Error::Factorization(format!(
                    "correlation matrix for {} (c2={}, nu={}) is not positive semi-definite",
                    model.family(),
                    model.c2(),
                    model.nu()
                ))
            })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Fills `out` with one realization, using `noise` as scratch space.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, noise: &mut [f64], out: &mut [f64]) {
        for e in noise.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.factor[i * self.d..i * self.d + i + 1];
            *o = row.iter().zip(noise.iter()).map(|(l, e)| l * e).sum();
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut noise = vec![0.0; self.d];
        let mut out = vec![0.0; self.d];
        self.sample_into(rng, &mut noise, &mut out);
        out
    }
}

/// Cholesky factor that tolerates semi-definite input: a pivot within
/// `PIVOT_TOL` of zero zeroes its column, so duplicated sites get identical
/// rows. Returns `None` on a clearly negative pivot.
fn semidefinite_cholesky(a: &[f64], d: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut s = a[j * d + j] + jitter;
        for k in 0..j {
            s -= l[j * d + k] * l[j * d + k];
        }
        if s < -PIVOT_TOL {
            return None;
        }
        if s <= PIVOT_TOL {
            continue;
        }
        let pivot = s.sqrt();
        l[j * d + j] = pivot;
        for i in (j + 1)..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = v / pivot;
        }
    }
    Some(l)
}

/// One realization of the Gaussian field on `design`.
pub fn sample_gaussian_field(
    design: &SpatialDesign,
    model: &CorrelationModel,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    Ok(GaussianField::new(design, model)?.sample(rng))
}

/// Configuration of the Schlather simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchlatherSimulator {
    pub truncation_bound: f64,
    pub max_points: usize,
}

impl Default for SchlatherSimulator {
    fn default() -> Self {
        Self {
            truncation_bound: DEFAULT_TRUNCATION_BOUND,
            max_points: MAX_SPECTRAL_POINTS,
        }
    }
}

impl SchlatherSimulator {
    pub fn with_bound(truncation_bound: f64) -> Result<Self> {
        if !(truncation_bound > 0.0) || !truncation_bound.is_finite() {
            return Err(Error::Parameter(format!(
                "truncation bound must be positive, got {truncation_bound}"
            )));
        }
        Ok(Self {
            truncation_bound,
            ..Self::default()
        })
    }

    /// Simulates one block into `z`. Returns the number of spectral points used.
    pub fn block_into<R: Rng + ?Sized>(
        &self,
        field: &GaussianField,
        rng: &mut R,
        z: &mut [f64],
    ) -> Result<usize> {
        let d = field.dim();
        let mut noise = vec![0.0; d];
        let mut y = vec![0.0; d];
        z.fill(0.0);
        let mut arrival = 0.0;
        for count in 0..self.max_points {
            arrival += rng.sample::<f64, _>(Exp1);
            let s = 1.0 / (SPECTRAL_MEAN * arrival);
            let zmin = z.iter().cloned().fold(f64::INFINITY, f64::min);
            if s * self.truncation_bound < zmin {
                return Ok(count);
            }
            field.sample_into(rng, &mut noise, &mut y);
            for (zi, &yi) in z.iter_mut().zip(y.iter()) {
                let v = s * yi;
                if v > *zi {
                    *zi = v;
                }
            }
        }
        Err(Error::SimulationBudget(format!(
            "block needed more than {} spectral points",
            self.max_points
        )))
    }

    /// `n_blocks` independent blocks on unit-Fréchet margins. Block `b` uses
    /// the random stream `(seed, b)`.
    pub fn simulate(
        &self,
        design: &Arc<SpatialDesign>,
        model: &CorrelationModel,
        n_blocks: usize,
        seed: u64,
    ) -> Result<BlockMaximaPanel> {
        if n_blocks == 0 {
            return Err(Error::Parameter("n_blocks must be at least 1".into()));
        }
        let field = GaussianField::new(design, model)?;
        let d = design.len();
        let mut values = vec![0.0; n_blocks * d];
        values
            .par_chunks_mut(d)
            .with_min_len(8)
            .enumerate()
            .try_for_each(|(b, z)| {
                let mut rng = substream(seed, b as u64);
                self.block_into(&field, &mut rng, z).map(|_| ())
            })?;
        BlockMaximaPanel::new(values, MarginScale::UnitFrechet, Arc::clone(design))
    }
}

/// Simulates a Schlather panel with unit-Fréchet margins.
pub fn simulate_schlather(
    design: &Arc<SpatialDesign>,
    model: &CorrelationModel,
    n_blocks: usize,
    seed: u64,
    truncation_bound: f64,
) -> Result<BlockMaximaPanel> {
    SchlatherSimulator::with_bound(truncation_bound)?.simulate(design, model, n_blocks, seed)
}

/// Closed-form bivariate distribution function of the Schlather process,
/// `P(Z1 ≤ z1, Z2 ≤ z2)` at correlation `rho`.
pub fn bivariate_cdf(z1: f64, z2: f64, rho: f64) -> Result<f64> {
    if !(z1 > 0.0) || !(z2 > 0.0) {
        return Err(Error::Domain(format!(
            "bivariate_cdf requires positive arguments, got ({z1}, {z2})"
        )));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!(
            "correlation must lie in [-1, 1], got {rho}"
        )));
    }
    let ratio = z1 * z2 / ((z1 + z2) * (z1 + z2));
    let root = (1.0 - 2.0 * (rho + 1.0) * ratio).max(0.0).sqrt();
    Ok((-0.5 * (1.0 / z1 + 1.0 / z2) * (1.0 + root)).exp())
}

/// `P(Z1 ≤ z, Z2 ≤ z) = exp(-θ/z)` with the Schlather pairwise coefficient.
pub fn diagonal_cdf(z: f64, rho: f64) -> f64 {
    (-theta_of_rho(rho) / z).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrfuncs::{extremal_coeff_pair, Family};

    fn line(hs: &[f64]) -> Arc<SpatialDesign> {
        Arc::new(
            SpatialDesign::from_coords(&hs.iter().map(|&h| (h, 0.0)).collect::<Vec<_>>()).unwrap(),
        )
    }

    #[test]
    fn cdf_examples() {
        let v = bivariate_cdf(1.0, 1.0, 0.0).unwrap();
        assert!((v - (-(1.0 + 0.5f64.sqrt())).exp()).abs() < 1e-15);
        assert!((v - 0.181_389_834_649_615).abs() < 1e-12);
        assert!((bivariate_cdf(1.0, 1.0, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        for &rho in &[-0.9, -0.2, 0.0, 0.4, 0.95] {
            for &z in &[0.3, 1.0, 7.0] {
                let want = (-extremal_coeff_pair(rho).unwrap() / z).exp();
                assert!((bivariate_cdf(z, z, rho).unwrap() - want).abs() < 1e-14);
            }
        }
        assert!(bivariate_cdf(0.0, 1.0, 0.0).is_err());
        assert!(bivariate_cdf(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn duplicate_sites_coincide() {
        let design = line(&[0.0, 0.0, 3.0]);
        let model = CorrelationModel::new(Family::WhittleMatern, 1.0, 1.0, 1.0).unwrap();
        let mut rng = substream(3, 0);
        for _ in 0..50 {
            let y = sample_gaussian_field(&design, &model, &mut rng).unwrap();
            assert!((y[0] - y[1]).abs() < 1e-12);
        }
        let panel = simulate_schlather(&design, &model, 200, 5, 4.0).unwrap();
        for row in panel.rows() {
            assert_eq!(row[0], row[1]);
        }
    }

    #[test]
    fn smooth_models_factorize() {
        let mut rng = substream(11, 0);
        let design = SpatialDesign::uniform_square(25, 10.0, &mut rng).unwrap();
        for fam in Family::ALL {
            let nu = 10f64.min(fam.max_smooth());
            let model = CorrelationModel::new(fam, 1.0, 10.0, nu).unwrap();
            GaussianField::new(&design, &model).unwrap();
        }
    }

    #[test]
    fn empirical_field_correlation() {
        let design = line(&[0.0, 1.0]);
        let model = CorrelationModel::new(Family::Cauchy, 1.0, 1.0, 1.0).unwrap();
        let field = GaussianField::new(&design, &model).unwrap();
        let mut rng = substream(17, 0);
        let n = 100_000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let v = field.sample(&mut rng);
            sxy += v[0] * v[1];
            sxx += v[0] * v[0];
            syy += v[1] * v[1];
        }
        let r = sxy / (sxx * syy).sqrt();
        assert!((r - 0.5).abs() < 0.01, "{r}");
    }

    #[test]
    fn deterministic_given_seed() {
        let design = line(&[0.0, 0.5, 2.0, 4.0]);
        let model = CorrelationModel::new(Family::WhittleMatern, 1.0, 1.0, 1.0).unwrap();
        let a = simulate_schlather(&design, &model, 64, 99, 4.0).unwrap();
        let b = simulate_schlather(&design, &model, 64, 99, 4.0).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let c = pool.install(|| simulate_schlather(&design, &model, 64, 99, 4.0).unwrap());
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert!(a.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn budget_error() {
        let design = line(&[0.0, 100.0]);
        let model = CorrelationModel::new(Family::PoweredExponential, 1.0, 0.1, 1.0).unwrap();
        let sim = SchlatherSimulator {
            max_points: 1,
            ..Default::default()
        };
        let err = sim.simulate(&design, &model, 4, 1).unwrap_err();
        assert!(matches!(err, Error::SimulationBudget(_)));
    }
}
