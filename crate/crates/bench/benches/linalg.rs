use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dynoclust::linalg::{partial_matching, sym_eigendecomp_with, EigenMethod};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigendecomposition");
    g.sample_size(10);
    for n in [50, 150, 400] {
        let m = symmetric(n, n as u64);
        g.bench_with_input(BenchmarkId::new("tridiagonal", n), &m, |b, m| {
            b.iter(|| sym_eigendecomp_with(m, EigenMethod::Tridiagonal).unwrap())
        });
        if n <= 150 {
            g.bench_with_input(BenchmarkId::new("jacobi", n), &m, |b, m| {
                b.iter(|| sym_eigendecomp_with(m, EigenMethod::Jacobi).unwrap())
            });
        }
    }
    g.finish();
}

fn matching(c: &mut Criterion) {
    let mut g = c.benchmark_group("partial_matching");
    for (rows, cols) in [(10, 10), (40, 60), (120, 100)] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cost = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        g.bench_with_input(BenchmarkId::from_parameter(format!("{rows}x{cols}")), &cost, |b, cost| {
            b.iter(|| partial_matching(cost).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, eigen, matching);
criterion_main!(benches);
