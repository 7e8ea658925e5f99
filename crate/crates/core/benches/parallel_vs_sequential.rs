use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use detach_rocket::ridge;
use detach_rocket::transform::{generate_kernels, transform_dataset, transform_dataset_sequential};
use detach_rocket::{SplitTag, TimeSeriesDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(n: usize, length: usize) -> TimeSeriesDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let series = (0..n)
        .map(|_| (0..length).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let labels = (0..n).map(|i| i % 2).collect();
    TimeSeriesDataset::new(
        "bench",
        series,
        labels,
        vec!["a".into(), "b".into()],
        SplitTag::Train,
    )
    .unwrap()
}

fn transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("transform");
    group.sample_size(10);
    for &(n, length, k) in &[(64, 150, 1000), (128, 286, 2000)] {
        let ds = dataset(n, length);
        let bank = generate_kernels(k, length, 0).unwrap();
        let id = format!("n{n}_l{length}_k{k}");
        group.bench_with_input(BenchmarkId::new("parallel", &id), &ds, |b, ds| {
            b.iter(|| transform_dataset(black_box(ds), &bank).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", &id), &ds, |b, ds| {
            b.iter(|| transform_dataset_sequential(black_box(ds), &bank).unwrap())
        });
    }
    group.finish();
}

fn ridge_loocv(c: &mut Criterion) {
    let ds = dataset(200, 150);
    let bank = generate_kernels(2000, 150, 0).unwrap();
    let x = transform_dataset(&ds, &bank).unwrap();
    let mut group = c.benchmark_group("ridge");
    group.sample_size(10);
    group.bench_function("loocv_n200_f4000", |b| {
        b.iter(|| ridge::fit_loocv(black_box(&x), ds.labels(), ds.class_names()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, transform, ridge_loocv);
criterion_main!(benches);
