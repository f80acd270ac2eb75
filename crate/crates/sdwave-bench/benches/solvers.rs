// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sdwave_bench::{kernels, problem};
use sdwave_core::control::solve_optimal;
use sdwave_core::forward::{solve_volterra, solve_voc};
use sdwave_core::riccati::{adjoint_gain, closed_loop_simulate, riccati_residual};
use sdwave_core::Regulator;

fn kernel_tables(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel_tables");
    for ns in [128usize, 256, 512] {
        g.bench_with_input(BenchmarkId::from_parameter(ns), &ns, |b, &ns| b.iter(|| kernels(8, black_box(ns))));
    }
    g.finish();
}

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward");
    for ns in [128usize, 256] {
        let k = kernels(8, ns);
        let (state, u) = problem(&k, ns / 8);
        g.bench_with_input(BenchmarkId::new("volterra", ns), &ns, |b, _| {
            b.iter(|| solve_volterra(&k, black_box(&state), &u).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("voc", ns), &ns, |b, _| {
            b.iter(|| solve_voc(&k, black_box(&state), &u).unwrap())
        });
    }
    g.finish();
}

fn optimal_control(c: &mut Criterion) {
    let mut g = c.benchmark_group("optimal_control");
    g.sample_size(10);
    for ns in [64usize, 128] {
        let k = kernels(8, ns);
        let (state, _) = problem(&k, ns / 8);
        g.bench_with_input(BenchmarkId::new("trajectory_space", ns), &ns, |b, _| {
            b.iter(|| solve_optimal(&k, black_box(&state)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("factor", ns), &ns, |b, _| {
            b.iter(|| Regulator::new(&k, black_box(ns / 8)).unwrap())
        });
        let reg = Regulator::new(&k, ns / 8).unwrap();
        g.bench_with_input(BenchmarkId::new("control_space_solve", ns), &ns, |b, _| {
            b.iter(|| reg.optimal_control(black_box(&state)).unwrap())
        });
    }
    g.finish();
}

fn feedback(c: &mut Criterion) {
    let mut g = c.benchmark_group("feedback");
    g.sample_size(10);
    let ns = 128;
    let k = kernels(8, ns);
    let (state, _) = problem(&k, ns / 8);
    let reg = Regulator::new(&k, ns / 8).unwrap();
    g.bench_function("adjoint_gain", |b| b.iter(|| adjoint_gain(&reg, black_box(&state)).unwrap()));
    g.bench_function("riccati_residual", |b| b.iter(|| riccati_residual(&reg, black_box(&state)).unwrap()));
    g.bench_function("closed_loop", |b| b.iter(|| closed_loop_simulate(&reg, black_box(&state)).unwrap()));
    g.finish();
}

criterion_group!(benches, kernel_tables, forward, optimal_control, feedback);
criterion_main!(benches);
