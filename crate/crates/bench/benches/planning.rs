// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use reconflow_bench::{pick, random_dag};
use reconflow_cli::catalog::{workflow, CatalogOptions};
use reconflow_cli::request::{resolve, touch};
use reconflow_core::graph::{expand_parallel, extend_reconfig_set, find_mcs};
use reconflow_core::sched::{FriesOptions, Scheduler};

fn mcs(c: &mut Criterion) {
    let mut group = c.benchmark_group("find_mcs");
    for n in [100usize, 1_000, 10_000] {
        let g = random_dag(n, 3.0, 7);
        let m = pick(&g, 8, 9);
        group.throughput(Throughput::Elements((g.len() + g.edge_count()) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| find_mcs(&g, &m).unwrap()));
    }
    group.finish();
}

fn extension(c: &mut Criterion) {
    let wf = workflow("w5", &CatalogOptions::default()).unwrap();
    let m = ["E1".into()].into();
    c.bench_function("extend_reconfig_set/w5_pruned", |b| b.iter(|| extend_reconfig_set(&wf.graph, &m, true).unwrap()));
}

fn worker_plan(c: &mut Criterion) {
    let mut group = c.benchmark_group("fries_plan_w2");
    for w in [4u32, 20, 40] {
        let mut wf = workflow("w2", &CatalogOptions { workers: w, ..CatalogOptions::default() }).unwrap();
        let ups = touch(&wf, &["J1".into(), "J4".into()], "n");
        let req = resolve(&mut wf, &ups).unwrap();
        let pg = expand_parallel(&wf.graph);
        let s = Scheduler::Fries(FriesOptions::basic());
        group.bench_with_input(BenchmarkId::from_parameter(w), &w, |b, _| b.iter(|| s.plan(&pg, &req).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, mcs, extension, worker_plan);
criterion_main!(benches);
