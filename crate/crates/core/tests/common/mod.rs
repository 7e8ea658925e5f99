//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::path::PathBuf;

use detach_rocket::transform::Kernel;
use detach_rocket::{FeatureMatrix, SplitTag, TimeSeriesDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian elimination with partial pivoting on a dense square system.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(row);
            for (dst, src) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *dst -= factor * src;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Minimizes `‖y − b − Xθ‖² + λ‖θ‖²` through the augmented normal equations.
/// Returns `(b, θ)`.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let n = x.len();
    let f = x[0].len();
    let design: Vec<Vec<f64>> = x
        .iter()
        .map(|row| std::iter::once(1.0).chain(row.iter().copied()).collect())
        .collect();
    let mut a = vec![vec![0.0; f + 1]; f + 1];
    let mut rhs = vec![0.0; f + 1];
    for i in 0..n {
        for p in 0..=f {
            rhs[p] += design[i][p] * y[i];
            for q in 0..=f {
                a[p][q] += design[i][p] * design[i][q];
            }
        }
    }
    for (p, row) in a.iter_mut().enumerate().skip(1) {
        row[p] += lambda;
    }
    let sol = gauss_solve(a, rhs);
    (sol[0], sol[1..].to_vec())
}

/// `±1` targets per output, matching the classifier's coding.
pub fn coded_targets(labels: &[usize], n_classes: usize) -> Vec<Vec<f64>> {
    let outputs: Vec<usize> = if n_classes == 2 {
        vec![1]
    } else {
        (0..n_classes).collect()
    };
    outputs
        .iter()
        .map(|&c| {
            labels
                .iter()
                .map(|&l| if l == c { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

/// Direct scalar convolution: one output position at a time, bounds-checked reads.
pub fn scalar_convolve(series: &[f64], k: &Kernel) -> Vec<f64> {
    let len = series.len() as isize;
    let out_len = series.len() + 2 * k.padding - (k.weights.len() - 1) * k.dilation;
    (0..out_len)
        .map(|j| {
            let mut acc = 0.0;
            for (m, &w) in k.weights.iter().enumerate() {
                let idx = j as isize + (m * k.dilation) as isize - k.padding as isize;
                if idx >= 0 && idx < len {
                    acc += w * series[idx as usize];
                }
            }
            acc + k.bias
        })
        .collect()
}

/// `(ppv, max)` by direct counting.
pub fn scalar_pool(map: &[f64]) -> (f64, f64) {
    let positive = map.iter().filter(|&&v| v > 0.0).count();
    let max = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (positive as f64 / map.len() as f64, max)
}

pub fn random_matrix(n: usize, f: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..f).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Labels cycling through every class, shuffled.
pub fn random_labels(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(rng);
    labels
}

pub fn class_names(n: usize) -> Vec<String> {
    (0..n).map(|c| format!("c{c}")).collect()
}

/// Binary problem where the first `informative` of `n_features` columns carry
/// the label (`±shift` plus unit Gaussian noise); the rest are pure noise.
pub fn planted_features(
    n: usize,
    n_features: usize,
    informative: usize,
    shift: f64,
    seed: u64,
) -> (FeatureMatrix<f64>, Vec<usize>) {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = random_labels(n, 2, &mut rng);
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| {
            let sign = if l == 1 { 1.0 } else { -1.0 };
            (0..n_features)
                .map(|j| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    if j < informative {
                        sign * shift + noise
                    } else {
                        noise
                    }
                })
                .collect()
        })
        .collect();
    (FeatureMatrix::from_rows(&rows).unwrap(), labels)
}

pub fn toy_series_dataset(n: usize, length: usize, seed: u64) -> TimeSeriesDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = random_labels(n, 2, &mut rng);
    let series = labels
        .iter()
        .map(|&l| {
            let freq = if l == 0 { 0.15 } else { 0.45 };
            (0..length)
                .map(|t| (t as f64 * freq).sin() + 0.5 * rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    TimeSeriesDataset::new("toy", series, labels, class_names(2), SplitTag::Train).unwrap()
}

/// Directories searched for `<Name>/<Name>_TRAIN.tsv`.
pub fn data_dirs() -> Vec<PathBuf> {
    let mut dirs = Vec::new();
    if let Ok(dir) = std::env::var("DETACH_DATA_DIR") {
        dirs.push(PathBuf::from(dir));
    }
    dirs.push(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ucr"));
    dirs
}

pub fn find_dataset(name: &str) -> Option<(PathBuf, PathBuf)> {
    data_dirs().into_iter().find_map(|dir| {
        let train = dir.join(name).join(format!("{name}_TRAIN.tsv"));
        let test = dir.join(name).join(format!("{name}_TEST.tsv"));
        (train.is_file() && test.is_file()).then_some((train, test))
    })
}

pub fn load_pair(name: &str) -> Option<(TimeSeriesDataset, TimeSeriesDataset)> {
    let (train, test) = find_dataset(name)?;
    let train = detach_rocket::load_ucr_tsv(train).expect("train file parses");
    let test = detach_rocket::load_ucr_tsv_aligned(test, &train, SplitTag::Test)
        .expect("test file parses");
    Some((train, test))
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
