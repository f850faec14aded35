use criterion::{criterion_group, criterion_main, Criterion};
use spabc::corrfuncs::bessel_k;
use spabc::mcle::composite_loglik;
use spabc::rng::substream;
use spabc::summaries::{ward_cluster, Summarizer};
use spabc::{CorrelationModel, Family, SchlatherSimulator, SpatialDesign};
use std::hint::black_box;
use std::sync::Arc;

fn design(d: usize) -> Arc<SpatialDesign> {
    Arc::new(SpatialDesign::uniform_square(d, 10.0, &mut substream(1, 0)).unwrap())
}

fn bessel(c: &mut Criterion) {
    c.bench_function("bessel_k nu=1.5 x=0.7", |b| {
        b.iter(|| bessel_k(black_box(1.5), black_box(0.7)))
    });
    c.bench_function("bessel_k nu=3.2 x=12", |b| {
        b.iter(|| bessel_k(black_box(3.2), black_box(12.0)))
    });
}

fn simulate(c: &mut Criterion) {
    let design = design(10);
    let model = CorrelationModel::new(Family::WhittleMatern, 1.0, 1.0, 1.0).unwrap();
    let sim = SchlatherSimulator::default();
    c.bench_function("schlather D=10 n=100", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            sim.simulate(&design, &model, 100, seed).unwrap()
        })
    });
}

fn summaries(c: &mut Criterion) {
    let design = design(10);
    c.bench_function("ward D=10 K=50", |b| {
        b.iter(|| ward_cluster(&design, 50).unwrap())
    });
    c.bench_function("ward D=20 K=100", |b| {
        let design = self::design(20);
        b.iter(|| ward_cluster(&design, 100).unwrap())
    });
    let model = CorrelationModel::new(Family::WhittleMatern, 1.0, 1.0, 1.0).unwrap();
    let panel = SchlatherSimulator::default()
        .simulate(&design, &model, 100, 3)
        .unwrap();
    let triplet = Summarizer::build(
        "triplet".parse().unwrap(),
        Family::WhittleMatern,
        design.clone(),
        50,
    )
    .unwrap();
    c.bench_function("triplet summary D=10 n=100", |b| {
        b.iter(|| triplet.summarize(black_box(&panel)).unwrap())
    });
    let pairwise = Summarizer::curve(
        "pairwise".parse().unwrap(),
        Family::WhittleMatern,
        design.clone(),
    )
    .unwrap();
    c.bench_function("pairwise curve summary D=10 n=100", |b| {
        b.iter(|| pairwise.summarize(black_box(&panel)).unwrap())
    });
    c.bench_function("composite loglik D=10 n=100", |b| {
        b.iter(|| composite_loglik(black_box(&panel), &model).unwrap())
    });
}

criterion_group!(benches, bessel, simulate, summaries);
criterion_main!(benches);
