//! Pool of one thread against the default pool on the three parallel hot
//! spots: operator assembly, Monte Carlo batches and an ε-sweep.
//!
//! Build with `--no-default-features` to time the sequential fallback itself.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracvar_core::asymptotics::{sweep_norms, SweepOptions, DEFAULT_EPS_GRID};
use fracvar_core::bubble::TruncatedBubble;
use fracvar_core::par;
use fracvar_core::problem::{ProblemParams, WeightModel};
use fracvar_core::quad::{seminorm_mc, McOptions, McRegion, PairOptions};
use fracvar_core::solver::{assemble, geometric_nodes};

fn modes() -> [(&'static str, usize); 2] {
    [("sequential", 1), ("parallel", 0)]
}

fn bench_assembly(c: &mut Criterion) {
    let p = ProblemParams::new(6, 0.5);
    let w = WeightModel::truncated_power(&p);
    let nodes = geometric_nodes(p.radius, 48, 1.12);
    let mut g = c.benchmark_group("assemble_m48");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || assemble(&p, &w, &nodes, PairOptions::default()).unwrap()))
        });
    }
    g.finish();
}

fn bench_mc(c: &mut Criterion) {
    let p = ProblemParams::new(6, 0.5);
    let w = WeightModel::truncated_power(&p);
    let u = TruncatedBubble::new(6, 0.5, 0.3, 1.0);
    let region = McRegion {
        center: vec![0.0; 6],
        radius: 2.0,
        focus: 0.3,
    };
    let eu = |x: &[f64]| u.eval(x);
    let ep = |x: &[f64]| w.eval(&[], x);
    let mut g = c.benchmark_group("mc_50k");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| {
                par::with_threads(t, || seminorm_mc(&eu, &ep, 6, 0.5, &region, &McOptions::new(50_000, 3)).unwrap())
            })
        });
    }
    g.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let mut p = ProblemParams::new(6, 0.5);
    p.q = 2.2;
    let mut g = c.benchmark_group("sweep_norms");
    g.sample_size(10);
    for (name, threads) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || sweep_norms(&p, &DEFAULT_EPS_GRID, &SweepOptions::default()).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_assembly, bench_mc, bench_sweep);
criterion_main!(benches);
