use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use transinfo::feynman_kac::lambda_max;
use transinfo::simulate::{sample_time_average, EnsembleConfig, Model, Observable};
use transinfo::trivial_metric::jump2;
use transinfo::{ot_cost, spectral_gap};
use transinfo_bench::{birth_death, chain_with_observable, transport_instance};

fn ot(c: &mut Criterion) {
    let mut group = c.benchmark_group("ot_cost");
    for n in [8, 32, 64] {
        let (cost, nu, mu) = transport_instance(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| ot_cost(black_box(&cost), black_box(&nu), black_box(&mu)).unwrap())
        });
    }
    group.finish();
}

fn principal_eigenvalue(c: &mut Criterion) {
    let mut group = c.benchmark_group("lambda_max");
    for n in [6, 50, 200] {
        let (chain, u) = chain_with_observable(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| lambda_max(&chain, black_box(&u))));
    }
    group.finish();
}

fn gap(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_gap");
    let dense = chain_with_observable(100).0;
    group.bench_function("dense_100", |b| b.iter(|| spectral_gap(black_box(&dense)).unwrap()));
    let bd = birth_death(2000);
    group.bench_function("birth_death_2000", |b| b.iter(|| spectral_gap(black_box(&bd)).unwrap()));
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    let chain = EnsembleConfig::new(Model::Chain(jump2(0.3).unwrap()), 20.0, 10_000, 1);
    let u = Observable::State { values: vec![0.0, 1.0] };
    group.bench_function("ctmc_10k_paths", |b| b.iter(|| sample_time_average(&chain, &u).unwrap()));
    let mut ou = EnsembleConfig::new(Model::Ou { dim: 1 }, 100.0, 10_000, 1);
    ou.exact_ou = true;
    let x = Observable::Linear { w: vec![1.0] };
    group.bench_function("ou_exact_10k_paths", |b| b.iter(|| sample_time_average(&ou, &x).unwrap()));
    group.finish();
}

criterion_group!(benches, ot, principal_eigenvalue, gap, simulation);
criterion_main!(benches);
