use caustica_bench::{lens_fixture, takeoff};
use caustica_core::canrel::{model_phase, relation_from_generating, ModelVariant, DEFAULT_CONE};
use caustica_core::compose::{compose_model_point, implicit_tilde_chart, ChartTilde, ModelLeg};
use caustica_core::fiocalc::{normal_operator_derivation, q, NormalMode};
use caustica_core::raytrace::{bicharacteristic_flow, FlowOptions};
use caustica_core::singularity::normal_forms::NormalForm;
use caustica_core::singularity::{classify, sample_at};
use caustica_core::pipeline::{composition_containment, ModelVerifyOptions};
use caustica_core::smallmath::{jacobian, DEFAULT_RANK_TOL};
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;
use std::hint::black_box;

fn flow(c: &mut Criterion) {
    let (model, source) = lens_fixture();
    let dir = takeoff();
    let opts = FlowOptions { record: false, ..FlowOptions::default() };
    c.bench_function("flow/lens_t6", |b| {
        b.iter(|| bicharacteristic_flow(&model, &source, black_box(&dir), 6.0, &opts).unwrap())
    });
}

fn jacobian_and_classify(c: &mut Criterion) {
    let map = NormalForm::HyperbolicSwf.map();
    let origin = DVector::zeros(3);
    let x = DVector::from_vec(vec![0.3, -0.2, 0.7]);
    c.bench_function("jacobian/poly_3x2", |b| b.iter(|| jacobian(&map, black_box(&x)).unwrap()));
    let sample = sample_at(&map, &origin, DEFAULT_RANK_TOL).unwrap();
    c.bench_function("classify/hyperbolic_swf", |b| b.iter(|| classify(&map, black_box(&sample)).unwrap()));
}

fn compose_numeric(c: &mut Criterion) {
    let leg = ModelLeg {
        n: 4,
        a: 0.3,
        b: -0.4,
        x1: 0.2,
        x_mid: vec![0.1],
        theta: vec![1.0, 0.2],
        diagonal_witness: (0.0, 0.3),
    };
    c.bench_function("compose/closed_form_leg", |b| b.iter(|| compose_model_point(black_box(&leg)).unwrap()));
    let gf = model_phase(3, DEFAULT_CONE, ModelVariant::Elliptic).unwrap();
    let chart = relation_from_generating(&gf).unwrap();
    let tilde = implicit_tilde_chart(&gf).unwrap();
    let mut opts = ModelVerifyOptions::new(3, ModelVariant::Elliptic);
    opts.samples = 20;
    let mut group = c.benchmark_group("compose");
    group.sample_size(10);
    group.bench_function("numeric_n3_20_samples", |b| {
        b.iter(|| composition_containment(&chart, &ChartTilde(&tilde), black_box(&opts)).unwrap())
    });
    group.finish();
}

fn fiocalc(c: &mut Criterion) {
    c.bench_function("fiocalc/derivation", |b| {
        b.iter(|| normal_operator_derivation(black_box(q(3, 4)), NormalMode::FoldedCrossCap, 4).unwrap())
    });
}

criterion_group!(benches, flow, jacobian_and_classify, compose_numeric, fiocalc);
criterion_main!(benches);
