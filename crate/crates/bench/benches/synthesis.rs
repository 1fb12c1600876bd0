use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mflq_bench::{scalar_model, sim_config, uncoupled_scalar_model, vector_model};
use mflq_core::path::uniform_grid;
use mflq_core::riccati::{solve_are_stable_subspace, HamiltonianKind};
use mflq_core::sim::{simulate, DecentralizedSocial, Profile};
use mflq_core::{
    synth_game_finite, synth_social_finite, synth_social_infinite, AreOptions, InfiniteOptions,
    RiccatiForm,
};

fn are(c: &mut Criterion) {
    for (name, p) in [("scalar", scalar_model()), ("vector", vector_model())] {
        let h = RiccatiForm::individual(&p).hamiltonian(HamiltonianKind::M1);
        c.bench_function(&format!("are_stable_subspace/{name}"), |b| {
            b.iter(|| solve_are_stable_subspace(black_box(&h), AreOptions::default()).unwrap())
        });
    }
}

fn synthesis(c: &mut Criterion) {
    let p = scalar_model();
    c.bench_function("social_infinite/scalar", |b| {
        b.iter(|| synth_social_infinite(black_box(&p), InfiniteOptions::default()).unwrap())
    });
    let grid = uniform_grid(0.0, 5.0, 2000);
    c.bench_function("social_finite/scalar_T5", |b| {
        b.iter(|| synth_social_finite(black_box(&p), 5.0, &grid).unwrap())
    });
    let q = uncoupled_scalar_model();
    c.bench_function("game_finite/scalar_T5", |b| {
        b.iter(|| synth_game_finite(black_box(&q), 5.0, &grid).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let p = scalar_model();
    let gains = synth_social_infinite(&p, InfiniteOptions::default()).unwrap();
    let law = DecentralizedSocial(&gains);
    let cfg = sim_config(50);
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    group.bench_function("decentralized/N50_T10", |b| {
        b.iter(|| simulate(&p, &Profile::uniform(&law), black_box(&cfg), None).unwrap())
    });
    group.finish();
}

criterion_group!(benches, are, synthesis, simulation);
criterion_main!(benches);
