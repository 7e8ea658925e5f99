//! UCR-format datasets: loading, stratified splitting, feature normalization.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Element, FeatureMatrix};

/// Standard deviations at or below this are treated as zero variance.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
    Combined,
}

/// Equal-length univariate series with dense class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    name: String,
    length: usize,
    values: Vec<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    split: SplitTag,
}

impl TimeSeriesDataset {
    pub fn new(
        name: impl Into<String>,
        series: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        split: SplitTag,
    ) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::InvalidDataset("no instances".into()));
        }
        if series.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} series but {} labels",
                series.len(),
                labels.len()
            )));
        }
        if class_names.len() < 2 {
            return Err(Error::TooFewClasses(class_names.len()));
        }
        let length = series[0].len();
        if length == 0 {
            return Err(Error::InvalidDataset("empty series".into()));
        }
        if let Some(bad) = series.iter().position(|s| s.len() != length) {
            return Err(Error::InvalidDataset(format!(
                "instance {bad} has length {}, expected {length}",
                series[bad].len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidDataset(format!(
                "class id {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        let values: Vec<f64> = series.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("time series values"));
        }
        Ok(TimeSeriesDataset {
            name: name.into(),
            length,
            values,
            labels,
            class_names,
            split,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Common series length `L`.
    pub fn series_length(&self) -> usize {
        self.length
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn instance(&self, i: usize) -> &[f64] {
        &self.values[i * self.length..(i + 1) * self.length]
    }

    pub fn instances(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.values.chunks_exact(self.length)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Subset by instance index, keeping the class encoding.
    pub fn subset(&self, indices: &[usize], split: SplitTag) -> TimeSeriesDataset {
        let mut values = Vec::with_capacity(indices.len() * self.length);
        for &i in indices {
            values.extend_from_slice(self.instance(i));
        }
        TimeSeriesDataset {
            name: self.name.clone(),
            length: self.length,
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            split,
        }
    }

    /// Serializes back to UCR tab-separated text.
    pub fn to_ucr_tsv(&self) -> String {
        let mut out = String::new();
        for (series, &label) in self.instances().zip(&self.labels) {
            out.push_str(&self.class_names[label]);
            for v in series {
                write!(out, "\t{v:?}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Separator {
    Tab,
    Comma,
}

impl Separator {
    fn as_char(self) -> char {
        match self {
            Separator::Tab => '\t',
            Separator::Comma => ',',
        }
    }
}

/// Integral numeric labels are canonicalised so `1`, `1.0` and `+1` name the same class.
fn canonical_label(token: &str) -> String {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 => format!("{}", v as i64),
        _ => token.to_string(),
    }
}

struct RawRows {
    labels: Vec<String>,
    series: Vec<Vec<f64>>,
}

fn parse_ucr(path: &Path, text: &str) -> Result<RawRows> {
    let mut separator = None;
    let mut labels = Vec::new();
    let mut series: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let sep = *separator.get_or_insert(if line.contains('\t') {
            Separator::Tab
        } else {
            Separator::Comma
        });
        let other = match sep {
            Separator::Tab => ',',
            Separator::Comma => '\t',
        };
        if line.contains(other) {
            return Err(Error::MixedSeparators {
                path: path.to_path_buf(),
                line: line_no,
            });
        }
        let mut fields = line.split(sep.as_char()).map(str::trim);
        let label = fields.next().unwrap_or_default();
        let values = fields
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::NonNumeric {
                        path: path.to_path_buf(),
                        line: line_no,
                        token: tok.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = series.first() {
            if values.len() != first.len() {
                return Err(Error::RaggedRow {
                    path: path.to_path_buf(),
                    line: line_no,
                    expected: first.len(),
                    found: values.len(),
                });
            }
        } else if values.is_empty() {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                line: line_no,
                expected: 1,
                found: 0,
            });
        }
        labels.push(canonical_label(label));
        series.push(values);
    }
    if series.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Ok(RawRows { labels, series })
}

fn dataset_name(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    for suffix in ["_TRAIN", "_TEST"] {
        if let Some(base) = stem.strip_suffix(suffix) {
            return base.to_string();
        }
    }
    stem
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a UCR TSV (or CSV) file; classes are numbered in order of first appearance.
pub fn load_ucr_tsv(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let rows = parse_ucr(path, &read_text(path)?)?;
    let mut class_names: Vec<String> = Vec::new();
    let labels = rows
        .labels
        .iter()
        .map(|l| match class_names.iter().position(|c| c == l) {
            Some(id) => id,
            None => {
                class_names.push(l.clone());
                class_names.len() - 1
            }
        })
        .collect();
    TimeSeriesDataset::new(
        dataset_name(path),
        rows.series,
        labels,
        class_names,
        SplitTag::Train,
    )
}

/// Loads a file using the class encoding of `reference` (typically the training set).
pub fn load_ucr_tsv_aligned(
    path: impl AsRef<Path>,
    reference: &TimeSeriesDataset,
    split: SplitTag,
) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let rows = parse_ucr(path, &read_text(path)?)?;
    let labels = rows
        .labels
        .iter()
        .map(|l| {
            reference
                .class_names
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| Error::UnknownLabel(l.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.series[0].len() != reference.length {
        return Err(Error::DimensionMismatch(format!(
            "{} has series length {}, reference has {}",
            path.display(),
            rows.series[0].len(),
            reference.length
        )));
    }
    TimeSeriesDataset::new(
        dataset_name(path),
        rows.series,
        labels,
        reference.class_names.clone(),
        split,
    )
}

/// Instance indices of a stratified split, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

pub fn stratified_split_indices(
    labels: &[usize],
    class_names: &[String],
    validation_fraction: f64,
    seed: u64,
) -> Result<SplitIndices> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "validation fraction {validation_fraction} not in (0, 1)"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_names.len()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if let Some((c, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < 2) {
        return Err(Error::Stratification {
            class: class_names[c].clone(),
            count: members.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut validation = Vec::new();
    let mut train = Vec::new();
    for mut members in by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        let take = ((validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
        validation.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    validation.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { train, validation })
}

/// Splits off a validation set holding `round(fraction * n_c)` instances of every class.
pub fn stratified_subsample_split(
    ds: &TimeSeriesDataset,
    validation_fraction: f64,
    seed: u64,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    let idx = stratified_split_indices(&ds.labels, &ds.class_names, validation_fraction, seed)?;
    Ok((
        ds.subset(&idx.train, SplitTag::Train),
        ds.subset(&idx.validation, SplitTag::Validation),
    ))
}

/// Per-feature mean and population standard deviation of a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    /// Strictly positive; `1.0` for constant features.
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl NormalizationStats {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn n_constant(&self) -> usize {
        self.constant.iter().filter(|&&c| c).count()
    }

    pub fn select(&self, positions: &[usize]) -> NormalizationStats {
        NormalizationStats {
            mean: positions.iter().map(|&p| self.mean[p]).collect(),
            std: positions.iter().map(|&p| self.std[p]).collect(),
            constant: positions.iter().map(|&p| self.constant[p]).collect(),
        }
    }
}

pub fn fit_normalization<T: Element>(features: &FeatureMatrix<T>) -> Result<NormalizationStats> {
    let (n, f) = (features.n_rows(), features.n_cols());
    if n == 0 {
        return Err(Error::InvalidDataset(
            "cannot fit normalization on zero rows".into(),
        ));
    }
    let mut sum = vec![0.0f64; f];
    for r in 0..n {
        for (s, v) in sum.iter_mut().zip(features.row(r)) {
            *s += v.to_f64();
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let mut sq = vec![0.0f64; f];
    let mut constant = vec![true; f];
    let first = features.row(0);
    for r in 0..n {
        for (c, v) in features.row(r).iter().enumerate() {
            let d = v.to_f64() - mean[c];
            sq[c] += d * d;
            if *v != first[c] {
                constant[c] = false;
            }
        }
    }
    let mut std = Vec::with_capacity(f);
    for c in 0..f {
        let s = (sq[c] / n as f64).sqrt();
        if !s.is_finite() {
            return Err(Error::NonFinite("feature matrix"));
        }
        if constant[c] || s <= STD_FLOOR {
            constant[c] = true;
            std.push(1.0);
        } else {
            std.push(s);
        }
    }
    Ok(NormalizationStats {
        mean,
        std,
        constant,
    })
}

/// Standardizes columns with previously fitted stats; constant features become 0.
pub fn apply_normalization<T: Element>(
    features: &FeatureMatrix<T>,
    stats: &NormalizationStats,
) -> Result<FeatureMatrix<T>> {
    let f = features.n_cols();
    if stats.len() != f {
        return Err(Error::DimensionMismatch(format!(
            "normalization stats for {} features, matrix has {f}",
            stats.len()
        )));
    }
    let mut values = Vec::with_capacity(features.values().len());
    for r in 0..features.n_rows() {
        values.extend(features.row(r).iter().enumerate().map(|(c, v)| {
            if stats.constant[c] {
                T::from_f64(0.0)
            } else {
                T::from_f64((v.to_f64() - stats.mean[c]) / stats.std[c])
            }
        }));
    }
    Ok(FeatureMatrix::from_parts_unchecked(
        features.n_rows(),
        f,
        values,
        features.feature_ids().to_vec(),
    ))
}
