//! Rayon pool against a single-thread pool on the data-parallel kernels.
//! With `--no-default-features` both groups run the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use homothetic::em::{maxwell_step, te_fields, EMState};
use homothetic::exec;
use homothetic::grid::{build_grid, DoubledForm, GridSpec};
use homothetic::homothety::act;
use homothetic::random::{noise_form, rng, smooth_lambda, smooth_scalar};

#[cfg(feature = "parallel")]
fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get());
    [("sequential", 1), ("parallel", threads)]
        .into_iter()
        .map(|(name, t)| (name, rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap()))
        .collect()
}

#[cfg(feature = "parallel")]
fn on<R: Send>(pool: &rayon::ThreadPool, f: impl FnOnce() -> R + Send) -> R {
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn pools() -> Vec<(&'static str, ())> {
    vec![("sequential", ())]
}

#[cfg(not(feature = "parallel"))]
fn on<R>(_: &(), f: impl FnOnce() -> R) -> R {
    f()
}

fn homothety(c: &mut Criterion) {
    let mut group = c.benchmark_group("act");
    for n in [128usize, 512] {
        let g = build_grid(&GridSpec::periodic(&[1.0, 1.0], &[n, n])).unwrap();
        let mut r = rng(3);
        let lambda = smooth_lambda(&mut r, &g, 1.0);
        let f = DoubledForm::new(noise_form(&mut r, &g, 1), noise_form(&mut r, &g, 1)).unwrap();
        for (name, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| b.iter(|| on(&pool, || act(&lambda, &f).unwrap())));
        }
    }
    group.finish();
}

fn maxwell(c: &mut Criterion) {
    let mut group = c.benchmark_group("maxwell_step");
    for n in [128usize, 256] {
        let g = build_grid(&GridSpec::periodic(&[1.0, 1.0], &[n, n])).unwrap();
        let mut r = rng(5);
        let lambda = smooth_lambda(&mut r, &g, 0.3);
        let stream = smooth_scalar(&mut r, &g, 3, 1.0);
        let e = te_fields(&g, &stream, Some(&lambda));
        let b = vec![vec![0.0; g.len()]; 3];
        let state = EMState::with_zero_offsets(&g, e, b).unwrap();
        let dt = 0.2 / n as f64;
        for (name, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |bch, _| bch.iter(|| on(&pool, || maxwell_step(&state, &lambda, dt).unwrap())));
        }
    }
    group.finish();
}

fn map_and_sum(c: &mut Criterion) {
    let mut group = c.benchmark_group("map_sum");
    let n = 1 << 20;
    let kernel = |i: usize| ((i as f64) * 1e-3).sin().exp();
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| on(&pool, || exec::sum(exec::map(n, kernel)))));
    }
    group.finish();
}

criterion_group!(benches, homothety, maxwell, map_and_sum);
criterion_main!(benches);
