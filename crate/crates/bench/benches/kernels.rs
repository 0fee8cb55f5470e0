//! Benchmarks of the per-voxel kernels and the field-level hot loops.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use qtensor_core::{
    discrete_energy, energy_gradient, FieldDiagnostics, Grid, MaterialParams, QField, QTensor,
};

fn random_tensors(count: usize) -> Vec<QTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..count)
        .map(|_| QTensor::new(std::array::from_fn(|_| rng.gen_range(-2.0..2.0))))
        .collect()
}

fn bench_pointwise(c: &mut Criterion) {
    let p = MaterialParams::new(1.0, 1.0, 1.0).unwrap();
    let qs = random_tensors(1024);
    c.bench_function("bulk_gradient_1k", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for q in &qs {
                acc += qtensor_core::bulk_gradient(black_box(q), &p).norm_sq();
            }
            acc
        })
    });
    c.bench_function("eigen_decompose_1k", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for q in &qs {
                let (l, _) = qtensor_core::eigen_decompose(black_box(q));
                acc += l[0];
            }
            acc
        })
    });
}

fn bench_field(c: &mut Criterion) {
    let p = MaterialParams::new(1.0, 1.0, 1.0).unwrap();
    let g = Grid::new(48).unwrap();
    let mut f = QField::with_hedgehog_boundary(g, p, 0.2);
    f.fill_hedgehog_reference(3.0 * g.h());
    let mut grad = vec![0.0; f.data().len()];
    c.bench_function("discrete_energy_n48", |b| {
        b.iter(|| discrete_energy(black_box(&f)))
    });
    c.bench_function("energy_gradient_n48", |b| {
        b.iter(|| energy_gradient(black_box(&f), &mut grad))
    });
    let d = FieldDiagnostics::new(&f);
    c.bench_function("theta_r02_n48", |b| {
        b.iter(|| d.theta(black_box([0.05, 0.0, -0.05]), 0.2).unwrap())
    });
}

criterion_group!(benches, bench_pointwise, bench_field);
criterion_main!(benches);
