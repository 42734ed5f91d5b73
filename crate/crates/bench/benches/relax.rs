use std::hint::black_box;

use ar_bench::{minibatch, reference_net};
use ar_core::math::{matvec, matvec_transposed};
use ar_core::relaxation::init_relaxation;
use ar_core::train::{train_minibatch, TrainConfig, TrainVariant};
use ar_core::{forward, relax, relax_step, Schedule, Variant, VariantConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_matvec(c: &mut Criterion) {
    let (params, x, _) = reference_net(1);
    let w = &params.weights()[0];
    let h = forward(&params, &x).unwrap().activations[1].clone();
    c.bench_function("matvec 300x784", |b| {
        b.iter(|| matvec(black_box(w), black_box(&x)).unwrap())
    });
    c.bench_function("matvec_transposed 784x300", |b| {
        b.iter(|| matvec_transposed(black_box(w), black_box(&h)).unwrap())
    });
}

fn bench_forward(c: &mut Criterion) {
    let (params, x, _) = reference_net(2);
    c.bench_function("forward 784-300-300-100-10", |b| {
        b.iter(|| forward(black_box(&params), black_box(&x)).unwrap())
    });
}

fn bench_relax_step(c: &mut Criterion) {
    let (params, x, t) = reference_net(3);
    let trace = forward(&params, &x).unwrap();
    let state = init_relaxation(&trace, &t).unwrap();
    let mut group = c.benchmark_group("relax_step");
    for mode in [Variant::Exact, Variant::Combined] {
        for schedule in [Schedule::Jacobi, Schedule::GaussSeidel] {
            let cfg = VariantConfig {
                mode,
                schedule,
                ..VariantConfig::default()
            };
            let id = BenchmarkId::new(mode.name(), format!("{schedule:?}"));
            group.bench_function(id, |b| {
                b.iter(|| relax_step(black_box(&state), &trace, &params, &cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_relax(c: &mut Criterion) {
    let (params, x, t) = reference_net(4);
    let trace = forward(&params, &x).unwrap();
    let cfg = VariantConfig::default();
    c.bench_function("relax 100 iterations", |b| {
        b.iter(|| relax(&trace, &params, black_box(&t), &cfg).unwrap())
    });
}

fn bench_minibatch(c: &mut Criterion) {
    let (params, _, _) = reference_net(5);
    let (xs, ts) = minibatch(5, 64);
    let xr: Vec<_> = xs.iter().collect();
    let tr: Vec<_> = ts.iter().collect();
    let mut group = c.benchmark_group("train_minibatch 64");
    group.sample_size(10);
    for variant in [
        TrainVariant::BackpropOracle,
        TrainVariant::Relax(Variant::Exact),
    ] {
        let cfg = TrainConfig {
            variant,
            ..TrainConfig::default()
        };
        group.bench_function(variant.name(), |b| {
            b.iter(|| {
                let mut p = params.clone();
                train_minibatch(&mut p, &xr, &tr, &cfg).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_matvec,
    bench_forward,
    bench_relax_step,
    bench_relax,
    bench_minibatch
);
criterion_main!(benches);
