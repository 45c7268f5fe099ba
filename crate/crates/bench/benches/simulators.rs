use criterion::{criterion_group, criterion_main, Criterion};
use pli_core::simulators::task_by_name;
use pli_core::RngStream;
use std::hint::black_box;

fn bench_simulators(c: &mut Criterion) {
    for (name, batch) in [
        ("gaussian_location", 100usize),
        ("gmm", 100),
        ("slcp", 100),
        ("sir", 100),
        ("furuta", 10),
    ] {
        let task = task_by_name(name).unwrap();
        let gt = task.ground_truth();
        c.bench_function(&format!("simulate_{name}_x{batch}"), |b| {
            b.iter(|| {
                let mut rng = RngStream::new(7);
                task.simulate(black_box(&gt), batch, &mut rng).unwrap()
            })
        });
    }
}

criterion_group!(benches, bench_simulators);
criterion_main!(benches);
