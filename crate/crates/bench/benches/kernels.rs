use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use qms_core::algebra::{op_norm, spectral_midpoint};
use qms_core::bratteli::family_commutative;
use qms_core::ideals::{fell_metric, ideal_to_cqms, random_ideal};
use qms_core::propinquity::min_shift_s0;
use qms_core::BetaSpec;

use qms_bench::{chain, families, rng, self_adjoint};

fn algebra_ops(c: &mut Criterion) {
    let mut group = c.benchmark_group("algebra");
    for (name, seq) in families(5) {
        let alg = seq.algebra(5).clone();
        let a = self_adjoint(&alg, 1);
        let b = self_adjoint(&alg, 2);
        group.bench_with_input(BenchmarkId::new("op_norm", name), &a, |bch, a| {
            bch.iter(|| op_norm(black_box(a)))
        });
        group.bench_with_input(BenchmarkId::new("mul", name), &(a.clone(), b), |bch, (a, b)| {
            bch.iter(|| black_box(a).mul(black_box(b)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("spectral_midpoint", name), &a, |bch, a| {
            bch.iter(|| spectral_midpoint(black_box(a)).unwrap())
        });
    }
    group.finish();
}

fn lipnorms(c: &mut Criterion) {
    let mut group = c.benchmark_group("lipnorm");
    for (name, seq) in families(5) {
        let ch = chain(&seq);
        let a = self_adjoint(seq.algebra(5), 3);
        group.bench_with_input(BenchmarkId::new("chain_eval", name), &a, |bch, a| {
            bch.iter(|| ch.eval(5, black_box(a)).unwrap())
        });
        let e = ch.expectations().composed(5, 0).unwrap().clone();
        group.bench_with_input(BenchmarkId::new("expectation", name), &a, |bch, a| {
            bch.iter(|| e.project(black_box(a)).unwrap())
        });
        let a3 = self_adjoint(seq.algebra(3), 4);
        group.bench_with_input(BenchmarkId::new("min_shift_s0", name), &a3, |bch, a| {
            bch.iter(|| min_shift_s0(&ch, 3, black_box(a), 5).unwrap())
        });
    }
    group.finish();
}

fn ideals(c: &mut Criterion) {
    let seq = family_commutative(8, &BetaSpec::default()).unwrap();
    let mut r = rng(5);
    let i = random_ideal(&seq, 0.6, &mut r);
    let j = random_ideal(&seq, 0.6, &mut r);
    c.bench_function("ideals/fell_metric", |b| {
        b.iter(|| fell_metric(black_box(&i), black_box(&j)).unwrap())
    });
    c.bench_function("ideals/ideal_to_cqms", |b| {
        b.iter(|| ideal_to_cqms(&seq, black_box(&i)).unwrap())
    });
}

criterion_group!(benches, algebra_ops, lipnorms, ideals);
criterion_main!(benches);
