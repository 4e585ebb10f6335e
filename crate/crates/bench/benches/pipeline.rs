// SPDX-License-Identifier: MIT OR Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use facesteer_bench::{small_world, w_plus_world};
use facesteer_core::text::Lexicon;
use facesteer_core::{
    angle_matrix, fit_all, navigate_sequential, navigate_vectorized, project_all, sample_seed,
    FeatureVector, FitConfig, LatentShape, SeedSpec, SequentialParams,
};

fn navigation(c: &mut Criterion) {
    let (reg, world) = w_plus_world();
    let seed = sample_seed(
        &SeedSpec::OracleGaussian { rng_seed: 1 },
        LatentShape::flat(world.d),
    )
    .unwrap();
    let mut target = FeatureVector::unmasked(reg.len());
    for i in (0..reg.len()).step_by(3) {
        target.set(i, 1.0);
    }
    c.bench_function("project_all/w+/34", |b| {
        b.iter(|| project_all(black_box(&seed), &world.planted).unwrap())
    });
    c.bench_function("navigate_vectorized/w+/34", |b| {
        b.iter(|| navigate_vectorized(black_box(&seed), &target, &world.planted).unwrap())
    });
    c.bench_function("navigate_sequential/w+/34", |b| {
        b.iter(|| {
            navigate_sequential(
                black_box(&seed),
                &target,
                &world.planted,
                SequentialParams::default(),
            )
            .unwrap()
        })
    });
    c.bench_function("angle_matrix/w+/34", |b| {
        b.iter(|| angle_matrix(black_box(&world.planted)).unwrap())
    });
}

fn fitting(c: &mut Criterion) {
    let (reg, world) = small_world(64);
    let data = world.generate_dataset(3000);
    let mut group = c.benchmark_group("fit_all");
    group.sample_size(10);
    group.bench_function("d64/n3000/k34", |b| {
        b.iter(|| fit_all(black_box(&data), &reg, &FitConfig::default()).unwrap())
    });
    group.finish();
}

fn parsing(c: &mut Criterion) {
    let reg = facesteer_core::FeatureRegistry::default();
    let lex = Lexicon::default_for(&reg).unwrap();
    let text = "a very young asian woman with slightly wavy long hair, blue eyes, no glasses and heavy makeup";
    c.bench_function("parse/sentence", |b| b.iter(|| lex.parse(black_box(text))));
}

criterion_group!(benches, navigation, fitting, parsing);
criterion_main!(benches);
