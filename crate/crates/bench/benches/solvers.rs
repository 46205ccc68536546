use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qms_core::lipnorms::car_lipnorm;
use qms_core::propinquity::{car_bridge_length, evident_bridge_length};
use qms_core::state_metrics::{lp_mk_distance, mk_distance, sample_states};
use qms_core::{BridgeOptions, LipNorm, QuantumState, SolverOptions, StateKind};

use qms_bench::{chain, families};

fn mk_solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("mk_distance");
    group.sample_size(10).measurement_time(Duration::from_secs(5));
    let opts = SolverOptions::default();
    for (name, seq) in families(3) {
        let ch = chain(&seq);
        let lip = ch.level(3).unwrap().clone();
        let kind = if lip.algebra().is_commutative() {
            StateKind::Vertex
        } else {
            StateKind::Pure
        };
        let states = sample_states(lip.algebra(), 2, kind, 9).unwrap();
        group.bench_function(BenchmarkId::new("pdhg", name), |b| {
            b.iter(|| mk_distance(&lip, &states[0], &states[1], &opts).unwrap())
        });
        if lip.algebra().is_commutative() {
            group.bench_function(BenchmarkId::new("lp_oracle", name), |b| {
                b.iter(|| lp_mk_distance(&lip, &states[0], &states[1]).unwrap())
            });
        }
    }
    let lip = car_lipnorm(2).unwrap();
    let alg = lip.algebra().clone();
    let (p, q) = (
        QuantumState::basis(&alg, 0, 0).unwrap(),
        QuantumState::basis(&alg, 0, 3).unwrap(),
    );
    group.bench_function("pdhg/car2", |b| b.iter(|| mk_distance(&lip, &p, &q, &opts).unwrap()));
    group.finish();
}

fn bridges(c: &mut Criterion) {
    let mut group = c.benchmark_group("bridge");
    group.sample_size(10);
    let opts = BridgeOptions {
        budget: 500,
        restarts: 8,
        seed: 1,
    };
    for (name, seq) in families(4) {
        let ch = chain(&seq);
        group.bench_function(BenchmarkId::new("evident", name), |b| {
            b.iter(|| evident_bridge_length(&ch, 3, &opts).unwrap())
        });
    }
    group.bench_function("car/3", |b| b.iter(|| car_bridge_length(3, &opts).unwrap()));
    group.finish();
}

criterion_group!(benches, mk_solver, bridges);
criterion_main!(benches);
