use super::*;
use crate::maxstable::{simulate_schlather, SpatialDesign};
use crate::summaries::TripletSummary;
use proptest::prelude::{prop, prop_assert, proptest};
use rand::Rng;
use std::sync::Arc;

fn sample_of(points: &[(f64, f64)], weights: &[f64]) -> PosteriorSample {
    PosteriorSample {
        particles: points
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (&(c2, nu), &weight))| AbcCandidate {
                phi: ParamPoint::new(c2, nu),
                distance: 0.0,
                weight,
                iteration: i,
            })
            .collect(),
        epsilon: 0.0,
        percentile: 0.1,
        stage: Stage::Rejection,
        provenance: Provenance {
            seed: 0,
            iterations: 100,
            stage1_iterations: None,
            stage1_accepted: None,
            method: SummaryMethod::TripletTheta,
            family: Family::WhittleMatern,
            clusters: None,
            n_blocks: 10,
            prior: PriorSpec::default(),
            kernel: None,
        },
    }
}

fn setup(d: usize, k: usize) -> (Summarizer, SummaryVector) {
    let mut rng = substream(77, 0);
    let design = Arc::new(SpatialDesign::uniform_square(d, 10.0, &mut rng).unwrap());
    let summarizer = Summarizer::build(
        SummaryMethod::TripletTheta,
        Family::WhittleMatern,
        design.clone(),
        k,
    )
    .unwrap();
    let truth = CorrelationModel::new(Family::WhittleMatern, 1.0, 1.0, 1.0).unwrap();
    let observed = summarizer
        .summarize(&simulate_schlather(&design, &truth, 30, 1, 4.0).unwrap())
        .unwrap();
    (summarizer, observed)
}

#[test]
fn accepted_counts() {
    assert_eq!(accepted_count(0.0002, 1_000_000), 200);
    assert_eq!(accepted_count(0.02, 10_000), 200);
    assert_eq!(accepted_count(0.05, 10_000), 500);
    assert_eq!(accepted_count(0.005, 100_000), 500);
    assert_eq!(accepted_count(0.005, 20_000), 100);
    assert_eq!(accepted_count(1.0, 1234), 1234);
    assert_eq!(accepted_count(0.0001, 100), 1);
    assert_eq!(accepted_count(0.013, 1000), 13);
    assert_eq!(accepted_count(0.0131, 1000), 14);
}

#[test]
fn prior_parsing_and_sampling() {
    let p: PriorSpec = "c2=0:10,nu=0.5:3".parse().unwrap();
    assert_eq!(p, PriorSpec::new((0.0, 10.0), (0.5, 3.0)).unwrap());
    assert!("c2=0:10".parse::<PriorSpec>().is_err());
    assert!("c2=3:1,nu=0:1".parse::<PriorSpec>().is_err());
    assert!("c2=0:1,nu=0:1,kappa=0:1".parse::<PriorSpec>().is_err());
    let clipped = p.for_family(Family::PoweredExponential).unwrap();
    assert_eq!(clipped.nu, (0.5, 2.0));
    let mut rng = substream(1, 1);
    for _ in 0..1000 {
        assert!(p.contains(p.sample(&mut rng)));
    }
    assert_eq!(PriorSpec::default().mean(), ParamPoint::new(5.0, 5.0));
}

#[test]
fn mean_curve_examples() {
    let grid = [0.0, 0.5, 1.0, 3.0];
    let one = sample_of(&[(2.0, 1.5)], &[1.0]);
    let m = CorrelationModel::new(Family::WhittleMatern, 1.0, 2.0, 1.5).unwrap();
    let curve = posterior_mean_curve(&one, Family::WhittleMatern, &grid).unwrap();
    for (c, &h) in curve.iter().zip(&grid) {
        assert_eq!(*c, m.rho(h));
    }
    let two = sample_of(&[(1.0, 1.0), (3.0, 1.0)], &[0.5, 0.5]);
    let a = CorrelationModel::new(Family::WhittleMatern, 1.0, 1.0, 1.0).unwrap();
    let b = CorrelationModel::new(Family::WhittleMatern, 1.0, 3.0, 1.0).unwrap();
    for (c, &h) in posterior_mean_curve(&two, Family::WhittleMatern, &grid)
        .unwrap()
        .iter()
        .zip(&grid)
    {
        assert!((c - 0.5 * (a.rho(h) + b.rho(h))).abs() < 1e-15);
    }
    let degenerate = sample_of(&[(1.0, 1.0), (3.0, 1.0), (5.0, 2.0)], &[1.0, 0.0, 0.0]);
    for (c, &h) in posterior_mean_curve(&degenerate, Family::WhittleMatern, &grid)
        .unwrap()
        .iter()
        .zip(&grid)
    {
        assert_eq!(*c, a.rho(h));
    }
    let empty = sample_of(&[], &[]);
    assert!(posterior_mean_curve(&empty, Family::WhittleMatern, &grid).is_err());
}

#[test]
fn band_examples() {
    let grid = [0.0, 0.7, 2.0];
    let same = sample_of(&vec![(1.5, 2.0); 40], &vec![1.0 / 40.0; 40]);
    let band = credible_band(&same, Family::WhittleMatern, &grid, 0.95).unwrap();
    let mean = posterior_mean_curve(&same, Family::WhittleMatern, &grid).unwrap();
    for i in 0..grid.len() {
        assert!((band.lower[i] - mean[i]).abs() < 1e-15 && (band.upper[i] - mean[i]).abs() < 1e-15);
    }
    let few = sample_of(&vec![(1.5, 2.0); 39], &vec![1.0; 39]);
    assert!(credible_band(&few, Family::WhittleMatern, &grid, 0.95).is_err());

    let pts: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64, 1.0)).collect();
    let s = sample_of(&pts, &[0.1, 0.3, 0.2, 0.2, 0.2]);
    let median = credible_band(&s, Family::WhittleMatern, &grid, 0.0).unwrap();
    assert_eq!(median.lower, median.upper);
    // ρ increases with c2; cumulative weight first reaches 0.5 at c2 = 3
    let m3 = CorrelationModel::new(Family::WhittleMatern, 1.0, 3.0, 1.0).unwrap();
    assert_eq!(median.lower[1], m3.rho(0.7));
}

#[test]
fn equal_density_gives_equal_weights() {
    let anchor = ParamPoint::new(2.0, 2.0);
    let stage1 = vec![anchor; 25];
    let omega = mutation_covariance(&stage1);
    assert_eq!(omega, [[1e-8, 0.0], [0.0, 1e-8]]);
    let r = 5e-5;
    let stage2: Vec<ParamPoint> = (0..8)
        .map(|i| {
            let a = i as f64 * std::f64::consts::FRAC_PI_4;
            ParamPoint::new(anchor.c2 + r * a.cos(), anchor.nu + r * a.sin())
        })
        .collect();
    let w = aabc_weights(&stage1, &omega, &stage2).unwrap();
    for x in &w {
        assert!((x - 0.125).abs() < 1e-9);
    }
}

#[test]
fn weights_match_direct_formula() {
    let stage1 = [
        ParamPoint::new(1.0, 2.0),
        ParamPoint::new(1.5, 2.5),
        ParamPoint::new(0.7, 1.2),
    ];
    let omega = mutation_covariance(&stage1);
    let stage2 = [
        ParamPoint::new(1.1, 2.1),
        ParamPoint::new(0.9, 1.5),
        ParamPoint::new(2.0, 3.0),
    ];
    let det = omega[0][0] * omega[1][1] - omega[0][1] * omega[1][0];
    let inv = [
        [omega[1][1] / det, -omega[0][1] / det],
        [-omega[1][0] / det, omega[0][0] / det],
    ];
    let density = |p: &ParamPoint, q: &ParamPoint| {
        let (a, b) = (p.c2 - q.c2, p.nu - q.nu);
        let quad = a * a * inv[0][0] + 2.0 * a * b * inv[0][1] + b * b * inv[1][1];
        (-0.5 * quad).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    };
    let raw: Vec<f64> = stage2
        .iter()
        .map(|p| 1.0 / stage1.iter().map(|q| density(p, q) / 3.0).sum::<f64>())
        .collect();
    let total: f64 = raw.iter().sum();
    let w = aabc_weights(&stage1, &omega, &stage2).unwrap();
    for (a, b) in w.iter().zip(&raw) {
        assert!((a - b / total).abs() < 1e-12);
    }
}

#[test]
fn rejection_run_contract() {
    let (summarizer, observed) = setup(6, 5);
    let settings = AbcSettings::new(30, PriorSpec::default(), 0.05);
    let post = abc_rejection(&observed, &summarizer, &settings, 200, 5).unwrap();
    assert_eq!(post.len(), 10);
    assert!(post.particles.iter().all(|p| p.distance <= post.epsilon));
    assert!((post.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(post
        .particles
        .windows(2)
        .all(|w| w[0].distance <= w[1].distance));
    assert_eq!(post.provenance.clusters, Some(5));

    let pool = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
    };
    let a = pool(1).install(|| abc_rejection(&observed, &summarizer, &settings, 200, 5).unwrap());
    let b = pool(3).install(|| abc_rejection(&observed, &summarizer, &settings, 200, 5).unwrap());
    assert_eq!(a, post);
    assert_eq!(b, post);
    assert!(abc_rejection(&observed, &summarizer, &settings, 99, 5).is_err());
}

#[test]
fn adaptive_run_contract() {
    let (summarizer, observed) = setup(5, 4);
    let settings = AbcSettings::new(20, PriorSpec::default(), 0.02);
    let post = abc_adaptive(&observed, &summarizer, &settings, 1000, 1000, 8).unwrap();
    assert_eq!(post.len(), 20);
    assert_eq!(post.stage, Stage::Adaptive);
    assert!(post
        .particles
        .iter()
        .all(|p| p.weight > 0.0 && PriorSpec::default().contains(p.phi)));
    assert!((post.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(post.particles.iter().all(|p| p.distance <= post.epsilon));
}

#[test]
fn mismatched_summary_is_rejected() {
    let (summarizer, _) = setup(5, 4);
    let wrong = SummaryVector::Triplet(TripletSummary {
        theta_bar: vec![1.5; 3],
        counts: vec![1; 3],
    });
    let settings = AbcSettings::new(20, PriorSpec::default(), 0.1);
    assert!(matches!(
        abc_rejection(&wrong, &summarizer, &settings, 100, 1),
        Err(Error::Dimension(_))
    ));
}

proptest! {
    #[test]
    fn weights_positive_and_normalized(
        s1 in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 2..30),
        seed in 0u64..1000,
    ) {
        let s1: Vec<ParamPoint> = s1.into_iter().map(|(a, b)| ParamPoint::new(a, b)).collect();
        let omega = mutation_covariance(&s1);
        let l = cholesky2(&omega).unwrap();
        let mut rng = substream(seed, 0);
        let s2: Vec<ParamPoint> = (0..20)
            .map(|_| {
                let a = s1[rng.random_range(0..s1.len())];
                let (e0, e1): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                ParamPoint::new(a.c2 + l[0] * e0, a.nu + l[1] * e0 + l[2] * e1)
            })
            .collect();
        let w = aabc_weights(&s1, &omega, &s2).unwrap();
        prop_assert!(w.iter().all(|&x| x > 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
