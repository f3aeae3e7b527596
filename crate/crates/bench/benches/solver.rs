use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use wzlab_bench::default_setup;
use wzlab_core::noise::{BrownianEnsemble, Partition};
use wzlab_core::{evolve, Records, SolverSpec};

fn free_propagate(c: &mut Criterion) {
    let mut group = c.benchmark_group("free_propagate");
    for num_points in [256usize, 512, 2048] {
        let (_, _, datum) = default_setup(num_points);
        group.bench_with_input(BenchmarkId::from_parameter(num_points), &datum, |b, f| {
            b.iter(|| black_box(f.free_propagate(black_box(0.01))))
        });
    }
    group.finish();
}

fn evolve_path(c: &mut Criterion) {
    let mut group = c.benchmark_group("evolve");
    group.sample_size(10);
    let master_steps = 1024;
    let (_, model, datum) = default_setup(512);
    let ensemble = BrownianEnsemble::generate(2, master_steps, 7, 0).expect("valid ensemble");
    for n in [8usize, 64, 1024] {
        let spec = SolverSpec::wong_zakai(Partition::uniform(n, master_steps).expect("n divides Q"))
            .with_records(Records::Uniform(1));
        group.bench_with_input(BenchmarkId::new("wz", n), &spec, |b, s| {
            b.iter(|| black_box(evolve(&datum, &model, &ensemble, s).expect("finite solve")))
        });
    }
    group.finish();
}

criterion_group!(benches, free_propagate, evolve_path);
criterion_main!(benches);
