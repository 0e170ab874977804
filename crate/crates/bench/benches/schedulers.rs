use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use greenflow_core::bench::deadline_from_alpha;
use greenflow_core::cwm::{integerize_weight, knapsack, knapsack_capacity};
use greenflow_core::genlab::{
    gen_cluster, gen_layered_dag, profile_from_intensities, synthetic_intensity_series, LinkStats, NodeSpec,
    ProfileParams, WeightStats,
};
use greenflow_core::heft_sl::heft_sl_on;
use greenflow_core::{carbon_cost, run_cwm, schedule_heft_sl, Cluster, CwmParams, Instance};

const NODES: [NodeSpec; 6] = [
    NodeSpec { speed: 1.0, idle_power: 60.0, work_power: 120.0 },
    NodeSpec { speed: 1.5, idle_power: 80.0, work_power: 180.0 },
    NodeSpec { speed: 2.0, idle_power: 100.0, work_power: 260.0 },
    NodeSpec { speed: 2.5, idle_power: 110.0, work_power: 330.0 },
    NodeSpec { speed: 3.0, idle_power: 130.0, work_power: 420.0 },
    NodeSpec { speed: 4.0, idle_power: 160.0, work_power: 560.0 },
];

fn cluster(copies: usize) -> Cluster {
    gen_cluster(&NODES, copies, LinkStats::default_for(&NODES), 8).unwrap()
}

fn instance(tasks: usize) -> Instance {
    let c = cluster(2);
    let layers = (2.0 * (tasks as f64).sqrt()).round() as usize;
    let w = gen_layered_dag(tasks, layers, 0.2, WeightStats::from_cluster(&c), 7).unwrap();
    let m = heft_sl_on(&w, &c, 1).makespan();
    let params = ProfileParams { horizon: (2.5 * m).ceil(), len_range: (10, 50), dyn_fraction: 0.3, seed: 9 };
    let p = profile_from_intensities(&synthetic_intensity_series(5000, 81), &c, &params).unwrap();
    Instance::new(w, c, p, deadline_from_alpha(m, 2.0).unwrap()).unwrap()
}

fn bench_knapsack(c: &mut Criterion) {
    let mut g = c.benchmark_group("knapsack");
    for copies in [2, 12, 24] {
        let cl = cluster(copies);
        let weights: Vec<u64> = cl.processors().iter().map(|p| integerize_weight(p.work_power)).collect();
        let values: Vec<f64> = cl.processors().iter().map(|p| p.speed).collect();
        let cap = knapsack_capacity(cl.total_idle_power() + 0.5 * cl.total_work_power(), &cl, 0.8);
        g.bench_with_input(BenchmarkId::from_parameter(cl.num_procs()), &cl, |b, _| {
            b.iter(|| knapsack(black_box(&weights), black_box(&values), cap))
        });
    }
    g.finish();
}

fn bench_heft_sl(c: &mut Criterion) {
    let mut g = c.benchmark_group("heft_sl");
    for tasks in [100, 500] {
        let inst = instance(tasks);
        g.bench_with_input(BenchmarkId::from_parameter(tasks), &inst, |b, inst| {
            b.iter(|| schedule_heft_sl(black_box(inst), 1))
        });
    }
    g.finish();
}

fn bench_cwm(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_cwm");
    g.sample_size(10);
    for tasks in [100, 500] {
        let inst = instance(tasks);
        let params = CwmParams { seed: 1, ..CwmParams::default() };
        g.bench_with_input(BenchmarkId::from_parameter(tasks), &inst, |b, inst| {
            b.iter(|| run_cwm(black_box(inst), &params).unwrap())
        });
    }
    g.finish();
}

fn bench_carbon_cost(c: &mut Criterion) {
    let inst = instance(500);
    let s = schedule_heft_sl(&inst, 1);
    c.bench_function("carbon_cost/500", |b| b.iter(|| carbon_cost(black_box(&s), &inst).unwrap()));
}

criterion_group!(benches, bench_knapsack, bench_heft_sl, bench_cwm, bench_carbon_cost);
criterion_main!(benches);
