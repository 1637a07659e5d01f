//! Parallel-versus-sequential comparison on the hot grid workloads.
//!
//! Build once with the default features and once without to record both
//! sides under distinct names:
//!
//! ```text
//! cargo bench -p latentid
//! cargo bench -p latentid --no-default-features
//! ```

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use latentid::kotlarski::{
    cross_moment, empirical_cf, invert_cf, Axis, CharFnGrid, GridSpec, XGridSpec,
};
use latentid::synth::{gen_gaussian_sample, GaussianSpec};

fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}

fn bench_empirical_cf(c: &mut Criterion) {
    let sample = gen_gaussian_sample(&GaussianSpec {
        step: 0.1,
        ..GaussianSpec::default()
    })
    .unwrap();
    let grid = GridSpec::new(4.5, 1025).unwrap();
    let mut group = c.benchmark_group("empirical_cf");
    group.bench_with_input(
        BenchmarkId::new(mode(), sample.len()),
        &sample,
        |b, sample| b.iter(|| empirical_cf(sample, Axis::X1, &grid).unwrap()),
    );
    group.finish();
}

fn bench_cross_moment(c: &mut Criterion) {
    let sample = gen_gaussian_sample(&GaussianSpec {
        step: 0.1,
        ..GaussianSpec::default()
    })
    .unwrap();
    let grid = GridSpec::new(4.5, 1025).unwrap();
    let mut group = c.benchmark_group("cross_moment");
    group.bench_with_input(
        BenchmarkId::new(mode(), sample.len()),
        &sample,
        |b, sample| b.iter(|| cross_moment(sample, &grid).unwrap()),
    );
    group.finish();
}

fn bench_invert_cf(c: &mut Criterion) {
    let grid = GridSpec::new(8.0, 4097).unwrap();
    let values = grid
        .nodes()
        .map(|t| num_complex::Complex64::new((-t * t / 2.0).exp(), 0.0))
        .collect();
    let cf = CharFnGrid::new(grid, values).unwrap();
    let xgrid = XGridSpec::new(-6.0, 6.0, 2001).unwrap();
    let mut group = c.benchmark_group("invert_cf");
    group.bench_function(BenchmarkId::new(mode(), xgrid.n_points), |b| {
        b.iter(|| invert_cf(&cf, &xgrid))
    });
    group.finish();
}

criterion_group!(benches, bench_empirical_cf, bench_cross_moment, bench_invert_cf);
criterion_main!(benches);
