//! Random convolutional kernel transform.
//!
//! Every kernel is applied to every series; its feature map is pooled into
//! the maximum (MAX) and the proportion of positive values (PPV). Row `i` of
//! the resulting matrix is `[MAX(f_i0), PPV(f_i0), MAX(f_i1), PPV(f_i1), ...]`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::features::{FeatureId, FeatureMatrix, Pooling};

pub const KERNEL_LENGTHS: [usize; 3] = [7, 9, 11];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub dilation: usize,
    pub padding: usize,
}

impl Kernel {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Receptive field `(len - 1) * dilation + 1`.
    pub fn span(&self) -> usize {
        (self.weights.len() - 1) * self.dilation + 1
    }

    /// Number of output positions for a series of `length` samples, if positive.
    pub fn output_length(&self, length: usize) -> Option<usize> {
        let extent = length + 2 * self.padding;
        let reach = (self.weights.len() - 1) * self.dilation;
        extent.checked_sub(reach).filter(|&n| n > 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBank {
    pub seed: u64,
    pub source_length: usize,
    pub kernels: Vec<Kernel>,
}

impl KernelBank {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Number of feature columns, `2K`.
    pub fn n_features(&self) -> usize {
        2 * self.kernels.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&BankDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: BankDocument = serde_json::from_str(text)?;
        if doc.k != doc.kernels.len() {
            return Err(Error::InvalidParameter(format!(
                "bank declares K={} but lists {} kernels",
                doc.k,
                doc.kernels.len()
            )));
        }
        let bank = KernelBank {
            seed: doc.seed,
            source_length: doc.l,
            kernels: doc.kernels,
        };
        for (i, k) in bank.kernels.iter().enumerate() {
            if k.is_empty() || k.dilation == 0 || k.output_length(bank.source_length).is_none() {
                return Err(Error::InvalidParameter(format!(
                    "kernel {i} does not fit series length {}",
                    bank.source_length
                )));
            }
        }
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::features::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct BankDocument {
    seed: u64,
    k: usize,
    l: usize,
    kernels: Vec<Kernel>,
}

impl From<&KernelBank> for BankDocument {
    fn from(bank: &KernelBank) -> Self {
        BankDocument {
            seed: bank.seed,
            k: bank.kernels.len(),
            l: bank.source_length,
            kernels: bank.kernels.clone(),
        }
    }
}

/// Draws `k` kernels for series of length `length`. The bank is a pure function of its arguments.
pub fn generate_kernels(k: usize, length: usize, seed: u64) -> Result<KernelBank> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "kernel count must be at least 1".into(),
        ));
    }
    let min_len = KERNEL_LENGTHS[0];
    if length < min_len {
        return Err(Error::InvalidParameter(format!(
            "series length {length} is shorter than the minimum kernel length {min_len}"
        )));
    }
    let lengths: Vec<usize> = KERNEL_LENGTHS
        .iter()
        .copied()
        .filter(|&l| l <= length)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernels = (0..k)
        .map(|_| {
            let len = lengths[rng.random_range(0..lengths.len())];
            let mut weights: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mean = weights.iter().sum::<f64>() / len as f64;
            weights.iter_mut().for_each(|w| *w -= mean);
            let bias = rng.random_range(-1.0..=1.0);
            let upper = ((length - 1) as f64 / (len - 1) as f64).log2();
            let exponent = if upper > 0.0 {
                rng.random_range(0.0..upper).floor()
            } else {
                0.0
            };
            let dilation = 2usize.pow(exponent as u32);
            let padding = if rng.random_bool(0.5) {
                (len - 1) * dilation / 2
            } else {
                0
            };
            Kernel {
                weights,
                bias,
                dilation,
                padding,
            }
        })
        .collect();
    Ok(KernelBank {
        seed,
        source_length: length,
        kernels,
    })
}

/// Dilated convolution plus bias; reads outside the series count as zero.
pub fn convolve(series: &[f64], kernel: &Kernel) -> Result<Vec<f64>> {
    let out_len = kernel.output_length(series.len()).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "kernel span {} exceeds padded series length {}",
            kernel.span(),
            series.len() + 2 * kernel.padding
        ))
    })?;
    let mut out = vec![0.0; out_len];
    accumulate_taps(series, kernel, &mut out);
    Ok(out)
}

/// Valid output range for tap `m`: positions `j` with `0 <= j - padding + m*dilation < len`.
#[inline]
fn tap_range(
    m: usize,
    kernel: &Kernel,
    series_len: usize,
    out_len: usize,
) -> (usize, usize, usize) {
    let offset = m * kernel.dilation;
    let lo = kernel.padding.saturating_sub(offset);
    let hi = (series_len + kernel.padding)
        .saturating_sub(offset)
        .min(out_len);
    // source index for output j is j + offset - padding
    (lo, hi, offset)
}

/// Accumulates all taps into `out` (length = output length) and adds the bias.
///
/// Each output position sums its taps in ascending tap order, skipping the
/// zero-padded reads, so the result does not depend on how positions are
/// grouped or vectorized.
#[inline]
fn accumulate_taps(series: &[f64], kernel: &Kernel, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let out_len = out.len();
    for (m, &w) in kernel.weights.iter().enumerate() {
        let (lo, hi, offset) = tap_range(m, kernel, series.len(), out_len);
        if lo >= hi {
            continue;
        }
        let src = &series[lo + offset - kernel.padding..hi + offset - kernel.padding];
        for (acc, &x) in out[lo..hi].iter_mut().zip(src) {
            *acc += w * x;
        }
    }
    out.iter_mut().for_each(|v| *v += kernel.bias);
}

/// Proportion of strictly positive entries and maximum of a feature map.
pub fn pool(feature_map: &[f64]) -> Result<(f64, f64)> {
    if feature_map.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot pool an empty feature map".into(),
        ));
    }
    Ok(pool_nonempty(feature_map))
}

#[inline]
fn pool_nonempty(feature_map: &[f64]) -> (f64, f64) {
    let mut positive = 0usize;
    let mut max = f64::NEG_INFINITY;
    for &v in feature_map {
        positive += (v > 0.0) as usize;
        if v > max {
            max = v;
        }
    }
    (positive as f64 / feature_map.len() as f64, max)
}

fn check_bank(length: usize, bank: &KernelBank) -> Result<()> {
    if length != bank.source_length {
        return Err(Error::DimensionMismatch(format!(
            "series length {length} but kernel bank was generated for {}",
            bank.source_length
        )));
    }
    Ok(())
}

fn full_feature_ids(n_kernels: usize) -> Vec<FeatureId> {
    (0..n_kernels)
        .flat_map(|k| {
            [
                FeatureId {
                    kernel: k,
                    pooling: Pooling::Max,
                },
                FeatureId {
                    kernel: k,
                    pooling: Pooling::Ppv,
                },
            ]
        })
        .collect()
}

/// Fills one output row for the kernels listed in `kernels`.
fn transform_row(
    series: &[f64],
    bank: &KernelBank,
    kernels: &[usize],
    row: &mut [f32],
    scratch: &mut Vec<f64>,
) {
    for (slot, &k) in row.chunks_exact_mut(2).zip(kernels) {
        let kernel = &bank.kernels[k];
        let out_len = kernel
            .output_length(series.len())
            .expect("kernel bank validated against series length");
        scratch.resize(out_len, 0.0);
        accumulate_taps(series, kernel, scratch);
        let (ppv, max) = pool_nonempty(scratch);
        slot[0] = max as f32;
        slot[1] = ppv as f32;
    }
}

fn validate_kernels(bank: &KernelBank, kernels: &[usize]) -> Result<()> {
    for &k in kernels {
        let kernel = bank.kernels.get(k).ok_or_else(|| {
            Error::InvalidParameter(format!("kernel {k} not in a bank of {}", bank.len()))
        })?;
        if kernel.output_length(bank.source_length).is_none() {
            return Err(Error::InvalidParameter(format!(
                "kernel {k} span {} exceeds padded series length",
                kernel.span()
            )));
        }
    }
    Ok(())
}

fn transform_impl(
    ds: &TimeSeriesDataset,
    bank: &KernelBank,
    kernels: &[usize],
    parallel: bool,
) -> Result<FeatureMatrix<f32>> {
    check_bank(ds.series_length(), bank)?;
    validate_kernels(bank, kernels)?;
    let width = 2 * kernels.len();
    let mut values = vec![0.0f32; ds.len() * width];
    if width > 0 {
        run_rows(ds, bank, kernels, &mut values, width, parallel);
    }
    let ids: Vec<FeatureId> = kernels
        .iter()
        .flat_map(|&k| {
            [
                FeatureId {
                    kernel: k,
                    pooling: Pooling::Max,
                },
                FeatureId {
                    kernel: k,
                    pooling: Pooling::Ppv,
                },
            ]
        })
        .collect();
    FeatureMatrix::new(ds.len(), width, values, ids)
}

#[cfg(feature = "parallel")]
fn run_rows(
    ds: &TimeSeriesDataset,
    bank: &KernelBank,
    kernels: &[usize],
    values: &mut [f32],
    width: usize,
    parallel: bool,
) {
    use rayon::prelude::*;
    if parallel {
        values
            .par_chunks_mut(width)
            .enumerate()
            .for_each_init(Vec::new, |scratch, (i, row)| {
                transform_row(ds.instance(i), bank, kernels, row, scratch)
            });
    } else {
        run_rows_sequential(ds, bank, kernels, values, width);
    }
}

#[cfg(not(feature = "parallel"))]
fn run_rows(
    ds: &TimeSeriesDataset,
    bank: &KernelBank,
    kernels: &[usize],
    values: &mut [f32],
    width: usize,
    _parallel: bool,
) {
    run_rows_sequential(ds, bank, kernels, values, width);
}

fn run_rows_sequential(
    ds: &TimeSeriesDataset,
    bank: &KernelBank,
    kernels: &[usize],
    values: &mut [f32],
    width: usize,
) {
    let mut scratch = Vec::new();
    for (i, row) in values.chunks_mut(width).enumerate() {
        transform_row(ds.instance(i), bank, kernels, row, &mut scratch);
    }
}

/// Maps every instance to its `2K` pooled features, parallel over instances
/// when the `parallel` feature is enabled.
pub fn transform_dataset(ds: &TimeSeriesDataset, bank: &KernelBank) -> Result<FeatureMatrix<f32>> {
    let all: Vec<usize> = (0..bank.len()).collect();
    let m = transform_impl(ds, bank, &all, true)?;
    debug_assert_eq!(m.feature_ids(), full_feature_ids(bank.len()).as_slice());
    Ok(m)
}

/// Single-threaded [`transform_dataset`]; produces bit-identical output.
pub fn transform_dataset_sequential(
    ds: &TimeSeriesDataset,
    bank: &KernelBank,
) -> Result<FeatureMatrix<f32>> {
    let all: Vec<usize> = (0..bank.len()).collect();
    transform_impl(ds, bank, &all, false)
}

/// Transform restricted to a subset of kernels (in the order given).
pub fn transform_kernels(
    ds: &TimeSeriesDataset,
    bank: &KernelBank,
    kernels: &[usize],
) -> Result<FeatureMatrix<f32>> {
    transform_impl(ds, bank, kernels, true)
}
