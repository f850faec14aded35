//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. `SPABC_ACCEPTANCE=1,6,10` runs a subset.

use spabc::abc::{abc_adaptive, abc_rejection, AbcSettings, PriorSpec};
use spabc::corrfuncs::{bessel_k, extremal_coeff_pair, CorrelationModel, Family};
use spabc::harness::{run_simulation_study, Estimator, StudyConfig, StudyReport};
use spabc::margins::frechet_to_gumbel;
use spabc::maxstable::{bivariate_cdf, SchlatherSimulator, SpatialDesign};
use spabc::mcle::pair_logdensity;
use spabc::rng::substream;
use spabc::summaries::{
    madogram_estimate, pairwise_theta_hat, triangle_distance, ward_cluster, Summarizer,
    SummaryMethod,
};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn close(label: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    check((got - want).abs() <= tol, || {
        format!("{label}: got {got:.12}, want {want:.12} (tol {tol:e})")
    })
}

/// Kolmogorov-Smirnov statistic of `sample` against `cdf`.
fn ks(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn unit_frechet_cdf(z: f64) -> f64 {
    if z > 0.0 {
        (-1.0 / z).exp()
    } else {
        0.0
    }
}

fn wm(c2: f64, nu: f64) -> CorrelationModel {
    CorrelationModel::new(Family::WhittleMatern, 1.0, c2, nu).unwrap()
}

/// Sites on a line: the first site pairs with the rest at `distances`.
fn line(distances: &[f64]) -> Arc<SpatialDesign> {
    let coords: Vec<(f64, f64)> = std::iter::once((0.0, 0.0))
        .chain(distances.iter().map(|&h| (h, 0.0)))
        .collect();
    Arc::new(SpatialDesign::from_coords(&coords).unwrap())
}

fn criterion_1() -> Outcome {
    let e = (-1.0f64).exp();
    let tol = 1e-9;
    for (rho, want) in [
        (1.0, 1.0),
        (0.0, 1.0 + 0.5f64.sqrt()),
        (-1.0, 2.0),
        (0.5, 1.5),
    ] {
        close(
            &format!("theta(rho={rho})"),
            extremal_coeff_pair(rho).map_err(|e| e.to_string())?,
            want,
            tol,
        )?;
    }
    let cdf = |z1, z2, rho| bivariate_cdf(z1, z2, rho).map_err(|e| e.to_string());
    close(
        "F(1,1;0)",
        cdf(1.0, 1.0, 0.0)?,
        (-(1.0 + 0.5f64.sqrt())).exp(),
        tol,
    )?;
    close("F(1,1;1)", cdf(1.0, 1.0, 1.0)?, e, tol)?;
    for rho in [-0.8, -0.2, 0.0, 0.3, 0.7, 0.95] {
        for z in [0.3, 1.0, 2.5, 10.0] {
            let theta = extremal_coeff_pair(rho).unwrap();
            close(
                &format!("F({z},{z};{rho})"),
                cdf(z, z, rho)?,
                (-theta / z).exp(),
                tol,
            )?;
        }
    }
    close("WM nu=0.5 h=1", wm(1.0, 0.5).rho(1.0), e, tol)?;
    for c2 in [0.3, 1.0, 4.0] {
        for h in [0.01, 0.5, 1.0, 3.0, 12.0] {
            close(
                &format!("WM nu=0.5 c2={c2} h={h}"),
                wm(c2, 0.5).rho(h),
                (-h / c2).exp(),
                tol,
            )?;
        }
    }
    for family in [
        Family::WhittleMatern,
        Family::Cauchy,
        Family::PoweredExponential,
    ] {
        let m = CorrelationModel::new(family, 0.8, 2.0, 1.0).unwrap();
        close(&format!("{family} h=0"), m.rho(0.0), 0.8, 0.0)?;
    }
    let cauchy = CorrelationModel::new(Family::Cauchy, 1.0, 2.0, 1.0).unwrap();
    close("Cauchy h=2", cauchy.rho(2.0), 0.5, tol)?;
    let k = |nu, x| bessel_k(nu, x).map_err(|e| e.to_string());
    let pi = std::f64::consts::PI;
    close("K_0.5(1)", k(0.5, 1.0)?, (pi / 2.0).sqrt() * e, tol)?;
    close(
        "K_1.5(2)",
        k(1.5, 2.0)?,
        (pi / 4.0).sqrt() * (-2.0f64).exp() * 1.5,
        tol,
    )?;
    close("K_1(1)", k(1.0, 1.0)?, 0.601_907_230_197_234_6, tol)?;
    Ok(
        "extremal coefficients, bivariate cdf, correlations and Bessel closed forms agree to 1e-9"
            .into(),
    )
}

/// Central mixed partial of `F(z1, z2)`, divided by `F`, with one
/// Richardson step; the oracle for the pair density.
fn fd_density(z1: f64, z2: f64, rho: f64) -> f64 {
    let f = |a: f64, b: f64| bivariate_cdf(a, b, rho).unwrap();
    let mixed = |d: f64| {
        let (h1, h2) = (d * z1, d * z2);
        (f(z1 + h1, z2 + h2) - f(z1 + h1, z2 - h2) - f(z1 - h1, z2 + h2) + f(z1 - h1, z2 - h2))
            / (4.0 * h1 * h2)
    };
    (4.0 * mixed(1e-3) - mixed(2e-3)) / 3.0
}

fn criterion_2() -> Outcome {
    let grid = [0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0];
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &rho in &[-0.5, 0.0, 0.5, 0.9] {
        for &z1 in &grid {
            for &z2 in &grid {
                let got = pair_logdensity(z1, z2, rho)
                    .map_err(|e| e.to_string())?
                    .exp();
                let want = fd_density(z1, z2, rho);
                let rel = ((got - want) / want).abs();
                check(rel <= 1e-6, || {
                    format!(
                        "z=({z1},{z2}) rho={rho}: density {got:e}, oracle {want:e}, rel {rel:e}"
                    )
                })?;
                worst = worst.max(rel);
                count += 1;
            }
        }
    }
    Ok(format!(
        "{count} grid points, worst relative error {worst:.2e} <= 1e-6"
    ))
}

fn criterion_3() -> Outcome {
    let distances = [0.25, 0.5, 1.0, 2.0, 4.0];
    let design = line(&distances);
    let model = wm(1.0, 1.0);
    let sim = SchlatherSimulator::default();
    let panel = sim
        .simulate(&design, &model, 100_000, 31)
        .map_err(|e| e.to_string())?;
    let mut worst_ks: f64 = 0.0;
    for j in 0..design.len() {
        let d = ks(panel.column(j).collect(), unit_frechet_cdf);
        check(d < 0.01, || format!("site {j}: margin KS {d:.4} >= 0.01"))?;
        worst_ks = worst_ks.max(d);
    }
    let mut worst_theta: f64 = 0.0;
    for (k, &h) in distances.iter().enumerate() {
        let got = pairwise_theta_hat(&panel, 0, k + 1).map_err(|e| e.to_string())?;
        let want = 1.0 + ((1.0 - model.rho(h)) / 2.0).sqrt();
        check((got - want).abs() <= 0.03, || {
            format!("h={h}: theta_hat {got:.4} vs {want:.4}")
        })?;
        worst_theta = worst_theta.max((got - want).abs());
    }
    let n = 5;
    let big = sim
        .simulate(&design, &model, 10_000 * n, 32)
        .map_err(|e| e.to_string())?;
    let d = design.len();
    let mut worst_stable: f64 = 0.0;
    for j in 0..d {
        let maxima: Vec<f64> = big
            .values()
            .chunks_exact(d * n)
            .map(|group| {
                (0..n)
                    .map(|b| group[b * d + j])
                    .fold(f64::NEG_INFINITY, f64::max)
                    / n as f64
            })
            .collect();
        let stat = ks(maxima, unit_frechet_cdf);
        check(stat < 0.02, || {
            format!("site {j}: max-stability KS {stat:.4} >= 0.02")
        })?;
        worst_stable = worst_stable.max(stat);
    }
    Ok(format!(
        "margin KS <= {worst_ks:.4}, |theta_hat - theta| <= {worst_theta:.4}, max-stability KS <= {worst_stable:.4}"
    ))
}

fn criterion_4() -> Outcome {
    let distances = [0.1, 0.3, 0.6, 1.0, 1.5, 2.5, 4.0, 6.0];
    let design = line(&distances);
    let model = wm(1.5, 1.0);
    let panel = SchlatherSimulator::default()
        .simulate(&design, &model, 5000, 41)
        .map_err(|e| e.to_string())?;
    let gumbel = frechet_to_gumbel(&panel).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (k, &h) in distances.iter().enumerate() {
        let m = madogram_estimate(&gumbel, 0, k + 1).map_err(|e| e.to_string())?;
        let want = extremal_coeff_pair(model.rho(h)).unwrap().ln();
        check((m - want).abs() < 0.02, || {
            format!("h={h}: madogram {m:.4} vs log theta {want:.4}")
        })?;
        worst = worst.max((m - want).abs());
    }
    Ok(format!(
        "{} distances, max |m_hat - log theta| = {worst:.4} < 0.02",
        distances.len()
    ))
}

/// A cheap triplet setup for the contract checks of the samplers.
fn small_problem() -> (Summarizer, spabc::SummaryVector, AbcSettings) {
    let design = Arc::new(SpatialDesign::uniform_square(5, 10.0, &mut substream(51, 0)).unwrap());
    let summarizer = Summarizer::build(
        SummaryMethod::TripletTheta,
        Family::WhittleMatern,
        design.clone(),
        3,
    )
    .unwrap();
    let observed_panel = SchlatherSimulator::default()
        .simulate(&design, &wm(1.0, 1.0), 20, 52)
        .unwrap();
    let observed = summarizer.summarize(&observed_panel).unwrap();
    (
        summarizer,
        observed,
        AbcSettings::new(20, PriorSpec::default(), 1.0),
    )
}

fn criterion_5() -> Outcome {
    let (summarizer, observed, settings) = small_problem();
    let sample =
        abc_rejection(&observed, &summarizer, &settings, 10_000, 53).map_err(|e| e.to_string())?;
    check(sample.len() == 10_000, || {
        format!("{} particles, expected all 10000", sample.len())
    })?;
    let uniform = |x: f64| (x / 10.0).clamp(0.0, 1.0);
    let c2 = ks(sample.particles.iter().map(|p| p.phi.c2).collect(), uniform);
    let nu = ks(sample.particles.iter().map(|p| p.phi.nu).collect(), uniform);
    check(c2 < 0.02 && nu < 0.02, || {
        format!("KS c2 {c2:.4}, nu {nu:.4}")
    })?;
    Ok(format!(
        "percentile 1 keeps all 10000 draws; KS c2 {c2:.4}, nu {nu:.4} < 0.02"
    ))
}

fn criterion_6() -> Outcome {
    let (summarizer, observed, mut settings) = small_problem();
    settings.percentile = 0.02;
    let rejection =
        abc_rejection(&observed, &summarizer, &settings, 10_000, 61).map_err(|e| e.to_string())?;
    check(rejection.len() == 200, || {
        format!("rejection kept {} particles", rejection.len())
    })?;
    settings.percentile = 0.05;
    let adaptive = abc_adaptive(&observed, &summarizer, &settings, 10_000, 1000, 62)
        .map_err(|e| e.to_string())?;
    let stage1 = adaptive.provenance.stage1_accepted;
    check(stage1 == Some(500), || {
        format!("adaptive stage 1 kept {stage1:?} particles")
    })?;
    check(adaptive.len() == 50, || {
        format!("adaptive stage 2 kept {} particles", adaptive.len())
    })?;
    Ok("rejection 10000 @ 0.02 -> 200; adaptive stage 1 10000 @ 0.05 -> 500".into())
}

/// Models B and C at desk scale, shared by criteria 7 and 8.
fn desk_study() -> StudyConfig {
    toml::from_str(
        r#"
        seed = 20120601
        n_blocks = 100
        n_sites = 10
        replicates = 3
        estimators = ["aabc-triplet", "mcle"]

        [[models]]
        label = "B"
        c2 = 1.0
        nu = 1.0

        [[models]]
        label = "C"
        c2 = 1.0
        nu = 3.0

        [abc]
        iterations = 20000
        stage2_iterations = 20000
        percentile = 0.005
        clusters = 50
        band_level = 0.95
        "#,
    )
    .expect("valid desk study")
}

fn criterion_7(report: &StudyReport) -> Outcome {
    let aabc = Estimator::Aabc(SummaryMethod::TripletTheta).to_string();
    let rows: Vec<_> = report
        .rows
        .iter()
        .filter(|r| r.model == "C" && r.estimator == aabc)
        .collect();
    let mut lines = Vec::new();
    for r in &rows {
        check(r.error.is_none(), || {
            format!(
                "replicate {}: {}",
                r.replicate,
                r.error.clone().unwrap_or_default()
            )
        })?;
        let coverage = r.band_coverage.ok_or("missing band")?;
        lines.push(format!(
            "rep {} mse {:.4} coverage {:.3}",
            r.replicate,
            r.mse.unwrap(),
            coverage
        ));
    }
    let summary = report
        .summary("C", Estimator::Aabc(SummaryMethod::TripletTheta))
        .ok_or("no summary")?;
    let mean = summary.mean_mse.ok_or("no mean")?;
    let detail = format!("mean MSE {mean:.4}; {}", lines.join("; "));
    check(rows.len() == 3, || {
        format!("{} replicates; {detail}", rows.len())
    })?;
    check(mean <= 0.05, || format!("mean MSE above 0.05; {detail}"))?;
    check(rows.iter().all(|r| r.band_coverage.unwrap() >= 0.9), || {
        format!("band coverage below 0.9; {detail}")
    })?;
    Ok(detail)
}

fn criterion_8(report: &StudyReport) -> Outcome {
    let mut parts = Vec::new();
    let mut failed = false;
    for model in ["B", "C"] {
        let mse = |e| {
            report
                .summary(model, e)
                .and_then(|s| if s.failures == 0 { s.mean_mse } else { None })
        };
        let a = mse(Estimator::Aabc(SummaryMethod::TripletTheta))
            .ok_or(format!("model {model}: failed AABC runs"))?;
        let m = mse(Estimator::Mcle).ok_or(format!("model {model}: failed MCLE runs"))?;
        failed |= a >= m;
        parts.push(format!("{model}: AABC {a:.4} vs MCLE {m:.4}"));
    }
    let detail = parts.join("; ");
    check(!failed, || detail.clone())?;
    Ok(detail)
}

fn criterion_9() -> Outcome {
    let config: StudyConfig = toml::from_str(
        r#"
        seed = 909
        n_blocks = 30
        n_sites = 6
        replicates = 2
        estimators = ["abc-triplet", "aabc-triplet", "abc-madogram", "mcle"]

        [[models]]
        label = "B"
        c2 = 1.0
        nu = 1.0

        [[models]]
        label = "cauchy"
        family = "cauchy"
        c2 = 2.0
        nu = 1.0

        [abc]
        iterations = 1000
        stage2_iterations = 1000
        percentile = 0.05
        clusters = 8
        "#,
    )
    .map_err(|e| e.to_string())?;
    let run = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let report = pool
            .install(|| run_simulation_study(&config))
            .map_err(|e| e.to_string())?;
        serde_json::to_string(&report).map_err(|e| e.to_string())
    };
    let one = run(1)?;
    let four = run(4)?;
    check(one == four, || {
        "reports differ between 1 and 4 threads".into()
    })?;
    check(!one.contains("\"error\":\""), || {
        "a study run failed".into()
    })?;
    Ok(format!(
        "16 runs, {} byte report identical under 1 and 4 threads",
        one.len()
    ))
}

fn criterion_10() -> Outcome {
    let design = SpatialDesign::uniform_square(20, 10.0, &mut substream(101, 0))
        .map_err(|e| e.to_string())?;
    check(design.triplets().len() == 1140, || {
        format!("{} triplets", design.triplets().len())
    })?;
    let base = ward_cluster(&design, 100).map_err(|e| e.to_string())?;
    check(base.triplets().len() == 1140, || {
        "clustering does not cover 1140 triplets".into()
    })?;
    let (s, c) = (0.6f64.sin(), 0.6f64.cos());
    let moved: Vec<(f64, f64)> = design
        .sites()
        .iter()
        .map(|p| (c * p.x - s * p.y + 3.7, s * p.x + c * p.y - 12.2))
        .collect();
    let mirrored: Vec<(f64, f64)> = design.sites().iter().map(|p| (-p.x + 1.0, p.y)).collect();
    for (name, coords) in [("rotated", moved), ("reflected", mirrored)] {
        let other = ward_cluster(&SpatialDesign::from_coords(&coords).unwrap(), 100)
            .map_err(|e| e.to_string())?;
        check(other.cluster_of() == base.cluster_of(), || {
            format!("{name} design clusters differently")
        })?;
    }
    let sides = design.triangle([2, 7, 11]);
    for perm in [[0, 1, 2], [1, 2, 0], [2, 1, 0]] {
        let d = triangle_distance(sides, [sides[perm[0]], sides[perm[1]], sides[perm[2]]])
            .map_err(|e| e.to_string())?;
        check(d == 0.0, || format!("congruent triangle distance {d:e}"))?;
    }
    Ok("1140 triplets; clustering unchanged by rotation, translation and reflection; congruent distance 0".into())
}

fn main() -> ExitCode {
    let selected: Option<Vec<usize>> = std::env::var("SPABC_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |n: usize| selected.as_ref().is_none_or(|s| s.contains(&n));
    let mut failures = 0;
    let mut report = |n: usize, name: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{n:>2}] {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL [{n:>2}] {name} ({secs:.1}s): {why}");
            }
        }
    };
    let simple: [Criterion; 6] = [
        (1, "closed-form consistency", criterion_1),
        (2, "pair density oracle", criterion_2),
        (3, "simulator margins and dependence", criterion_3),
        (4, "madogram relation", criterion_4),
        (5, "prior recovery at percentile 1", criterion_5),
        (6, "exact acceptance counts", criterion_6),
    ];
    for (n, name, f) in simple {
        if wanted(n) {
            let start = Instant::now();
            report(n, name, start, f());
        }
    }
    if wanted(7) || wanted(8) {
        let start = Instant::now();
        match run_simulation_study(&desk_study()) {
            Ok(study) => {
                println!(
                    "      desk study finished in {:.1}s",
                    start.elapsed().as_secs_f64()
                );
                if wanted(7) {
                    report(
                        7,
                        "desk-scale posterior recovery (model C)",
                        start,
                        criterion_7(&study),
                    );
                }
                if wanted(8) {
                    report(
                        8,
                        "AABC beats MCLE on models B and C",
                        start,
                        criterion_8(&study),
                    );
                }
            }
            Err(e) => {
                for (n, name) in [(7, "desk-scale posterior recovery"), (8, "AABC beats MCLE")] {
                    if wanted(n) {
                        report(n, name, start, Err(format!("study failed: {e}")));
                    }
                }
            }
        }
    }
    if wanted(9) {
        let start = Instant::now();
        report(
            9,
            "study determinism across thread counts",
            start,
            criterion_9(),
        );
    }
    if wanted(10) {
        let start = Instant::now();
        report(10, "clustering geometry", start, criterion_10());
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
