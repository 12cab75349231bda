use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use condenser_core::balayage::{balayage_columns, BalayageCache};
use condenser_core::config::RunConfig;
use condenser_core::geometry::sphere_cloud;
use condenser_core::kernel::{assemble_with, AssembleOptions};
use condenser_core::pipeline;
use condenser_core::qp::{project_capped_simplex, solve, QpOptions, QpProblem};

fn concentric(res: usize) -> pipeline::Prepared {
    let cfg = RunConfig::from_toml(&format!(
        "[geometry]\nexample = \"concentric\"\nresolution = {res}\ntruncation_radius = 4\n[kernel]\nalpha = 2\ndiag_scale = 1.9\n"
    ))
    .unwrap();
    pipeline::prepare(&cfg).unwrap()
}

fn kernel_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernel_assembly");
    for n in [200, 800] {
        let cloud = sphere_cloud(1.0, n).unwrap();
        let opts = AssembleOptions { diag_scale: 1.9, certify: true };
        group.bench_with_input(BenchmarkId::from_parameter(n), &cloud, |b, cloud| b.iter(|| assemble_with(cloud, 2.0, opts).unwrap()));
    }
    group.finish();
}

fn projection(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let caps: Vec<f64> = (0..2000).map(|_| rng.random_range(0.0..0.01)).collect();
    c.bench_function("capped_simplex_projection/2000", |b| b.iter(|| project_capped_simplex(&v, Some(&caps), 1.0).unwrap()));
}

fn simplex_qp(c: &mut Criterion) {
    let cloud = sphere_cloud(1.0, 400).unwrap();
    let k = assemble_with(&cloud, 2.0, AssembleOptions { diag_scale: 1.9, certify: true }).unwrap();
    let problem = QpProblem::simplex(k.matrix().clone());
    let opts = QpOptions::default();
    c.bench_function("simplex_qp/sphere_400", |b| b.iter(|| solve(&problem, None, &opts).unwrap()));
}

fn balayage(c: &mut Criterion) {
    let prepared = concentric(10);
    let a = pipeline::assemble_problem(&prepared, &BalayageCache::in_memory()).unwrap();
    let (f, q) = (prepared.geometry.f_nodes(), prepared.geometry.dc_nodes());
    let mut group = c.benchmark_group("balayage");
    group.sample_size(10);
    group.bench_function("columns/concentric_10", |b| b.iter(|| balayage_columns(&a.k, &f, &q).unwrap()));
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let prepared = concentric(10);
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("execute/concentric_10", |b| b.iter(|| pipeline::execute(&prepared, &BalayageCache::in_memory()).unwrap()));
    group.finish();
}

criterion_group!(benches, kernel_assembly, projection, simplex_qp, balayage, end_to_end);
criterion_main!(benches);
