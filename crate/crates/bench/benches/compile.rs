use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use edicr_bench::{two_agent, workloads};
use edicr_core::binning::build_all_bins;
use edicr_core::formulations::{build_decmdp_milp, build_edicr_milp2, build_edicr_milp_n};
use edicr_core::histories::constant_policy;
use edicr_core::Evaluator;

fn trees(c: &mut Criterion) {
    let mut group = c.benchmark_group("history_trees");
    for (name, inst) in workloads() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &inst, |b, inst| {
            b.iter(|| Evaluator::new(black_box(inst)).unwrap())
        });
    }
    group.finish();
}

fn bins(c: &mut Criterion) {
    let mut group = c.benchmark_group("bins");
    group.sample_size(20);
    for (name, inst) in workloads() {
        let ev = Evaluator::new(&inst).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| build_all_bins(black_box(&ev)).unwrap()));
    }
    group.finish();
}

fn formulations(c: &mut Criterion) {
    let mut group = c.benchmark_group("build");
    group.sample_size(10);
    for (name, inst) in workloads() {
        let ev = Evaluator::new(&inst).unwrap();
        if inst.num_agents() == 2 {
            group.bench_function(BenchmarkId::new("edicr_milp2", name), |b| b.iter(|| build_edicr_milp2(&ev).unwrap()));
            group.bench_function(BenchmarkId::new("decmdp_milp", name), |b| b.iter(|| build_decmdp_milp(&ev).unwrap()));
        } else {
            group.bench_function(BenchmarkId::new("edicr_milp_n", name), |b| b.iter(|| build_edicr_milp_n(&ev).unwrap()));
        }
    }
    group.finish();
}

fn lp_text(c: &mut Criterion) {
    let mut group = c.benchmark_group("write_lp");
    group.sample_size(10);
    for (name, inst) in two_agent() {
        let ev = Evaluator::new(&inst).unwrap();
        let compiled = build_decmdp_milp(&ev).unwrap();
        group.bench_function(BenchmarkId::new("decmdp_milp", name), |b| b.iter(|| compiled.program.write_lp().unwrap()));
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate_policy");
    for (name, inst) in workloads() {
        let ev = Evaluator::new(&inst).unwrap();
        let policy = constant_policy(ev.trees(), 0);
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| ev.evaluate_policy(black_box(&policy)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, trees, bins, formulations, lp_text, evaluation);
criterion_main!(benches);
