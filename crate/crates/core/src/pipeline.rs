//! End-to-end runs: full ROCKET, Detach-ROCKET with trade-off model selection,
//! fixed-retention pruning, and the small-ROCKET control.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    apply_normalization, fit_normalization, stratified_split_indices, NormalizationStats,
    TimeSeriesDataset,
};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::ridge::{self, RidgeModel};
use crate::sfd::{self, Labeled, PruningTrace, SfdConfig};
use crate::transform::{self, generate_kernels, KernelBank};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffConfig {
    /// Weight of the pruned fraction against validation accuracy.
    pub c: f64,
    pub validation_fraction: f64,
    /// Seed of the stratified train/validation split.
    pub seed: u64,
}

impl Default for TradeoffConfig {
    fn default() -> Self {
        TradeoffConfig {
            c: 0.1,
            validation_fraction: 0.33,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub count: usize,
    pub seed: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            count: 10_000,
            seed: 0,
        }
    }
}

/// Every seed that influences a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub kernel: u64,
    pub split: Option<u64>,
    pub strategy: Option<u64>,
}

/// Step maximizing `α(q) + c·q` with `q = 1 - retained_fraction`; ties go to the larger `q`.
pub fn select_optimal_step(trace: &PruningTrace, c: f64) -> Result<(usize, f64)> {
    if !trace.has_validation() {
        return Err(Error::InvalidParameter(
            "trade-off selection needs validation accuracies on every step".into(),
        ));
    }
    if c.is_nan() || c < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "c must be non-negative, got {c}"
        )));
    }
    let objective = |t: usize| {
        let s = &trace.steps[t];
        s.validation_accuracy.unwrap() + c * s.pruned_fraction()
    };
    let mut best = 0;
    for t in 1..trace.len() {
        let (f, fb) = (objective(t), objective(best));
        if f > fb
            || (f == fb && trace.steps[t].pruned_fraction() > trace.steps[best].pruned_fraction())
        {
            best = t;
        }
    }
    Ok((best, trace.steps[best].pruned_fraction()))
}

/// Source of raw (unnormalized) features; lets callers plug in a cache.
pub trait FeatureProvider: Sync {
    fn features(&self, ds: &TimeSeriesDataset, bank: &KernelBank) -> Result<FeatureMatrix<f32>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DirectTransform;

impl FeatureProvider for DirectTransform {
    fn features(&self, ds: &TimeSeriesDataset, bank: &KernelBank) -> Result<FeatureMatrix<f32>> {
        transform::transform_dataset(ds, bank)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: RunMode,
    pub c: Option<f64>,
    pub q_c: Option<f64>,
    pub selected_step: Option<usize>,
    pub trace_steps: Option<usize>,
    pub seeds: RunSeeds,
}

/// A pruned classifier: the kernels it needs, its normalization and its ridge model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetachModel {
    pub kernel_bank: KernelBank,
    pub selected: Vec<usize>,
    pub normalization: NormalizationStats,
    pub model: RidgeModel,
    pub provenance: Provenance,
}

impl DetachModel {
    /// Kernels referenced by the selected features, ascending.
    pub fn kernels_used(&self) -> Vec<usize> {
        let mut k: Vec<usize> = self.selected.iter().map(|id| id / 2).collect();
        k.sort_unstable();
        k.dedup();
        k
    }

    /// Normalized features for `ds`, computing only the kernels that are needed.
    pub fn features(&self, ds: &TimeSeriesDataset) -> Result<FeatureMatrix<f32>> {
        let raw = transform::transform_kernels(ds, &self.kernel_bank, &self.kernels_used())?;
        apply_normalization(&raw.select_features(&self.selected)?, &self.normalization)
    }

    pub fn predict(&self, ds: &TimeSeriesDataset) -> Result<Vec<usize>> {
        self.model.predict(&self.features(ds)?)
    }

    pub fn accuracy(&self, ds: &TimeSeriesDataset) -> Result<f64> {
        self.model.accuracy(&self.features(ds)?, ds.labels())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::features::write_atomic(path, self.to_json()?.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Full,
    EndToEnd,
    FixedRetention,
    SmallRocket,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullModelMetrics {
    pub lambda: f64,
    pub n_features: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Per-run report. Field order is the JSON key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: RunMode,
    pub dataset: String,
    pub n_train: usize,
    pub n_test: usize,
    pub series_length: usize,
    pub n_classes: usize,
    pub n_kernels: usize,
    pub seeds: RunSeeds,
    pub sfd: Option<SfdConfig>,
    pub c: Option<f64>,
    pub retention_target: Option<f64>,
    pub validation_fraction: Option<f64>,
    pub n_validation: Option<usize>,
    pub lambda_sfd: Option<f64>,
    pub lambda_final: f64,
    pub trace_steps: Option<usize>,
    pub trace_file: Option<String>,
    pub selected_step: Option<usize>,
    pub q_c: Option<f64>,
    pub n_features_total: usize,
    pub n_features_selected: usize,
    pub retained_fraction: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub full_model: Option<FullModelMetrics>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with wall-clock fields removed, for reproducibility comparisons.
    pub fn to_json_without_timings(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.timings.clear();
        copy.to_json()
    }
}

/// Outcome of a pruning run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub model: DetachModel,
    pub report: RunReport,
    pub trace: Option<PruningTrace>,
}

struct Clock {
    timings: BTreeMap<String, f64>,
    last: Instant,
}

impl Clock {
    fn start() -> Self {
        Clock {
            timings: BTreeMap::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, phase: &str) {
        let now = Instant::now();
        *self.timings.entry(phase.to_string()).or_default() += (now - self.last).as_secs_f64();
        self.last = now;
    }
}

fn check_pair(train: &TimeSeriesDataset, test: &TimeSeriesDataset) -> Result<()> {
    if train.series_length() != test.series_length() {
        return Err(Error::DimensionMismatch(format!(
            "train series length {} but test series length {}",
            train.series_length(),
            test.series_length()
        )));
    }
    if train.class_names() != test.class_names() {
        return Err(Error::InvalidDataset(
            "train and test use different class encodings".into(),
        ));
    }
    Ok(())
}

/// Normalization fitted on `train`, then applied to every matrix in `others`.
fn normalize_with(
    train: &FeatureMatrix<f32>,
    others: &[&FeatureMatrix<f32>],
) -> Result<(
    NormalizationStats,
    FeatureMatrix<f32>,
    Vec<FeatureMatrix<f32>>,
)> {
    let stats = fit_normalization(train)?;
    let train_n = apply_normalization(train, &stats)?;
    let rest = others
        .iter()
        .map(|m| apply_normalization(m, &stats))
        .collect::<Result<Vec<_>>>()?;
    Ok((stats, train_n, rest))
}

/// Refits normalization and a LOOCV ridge on the selected columns of `raw_train`.
fn refit_selected(
    raw_train: &FeatureMatrix<f32>,
    labels: &[usize],
    class_names: &[String],
    selected: &[usize],
) -> Result<(NormalizationStats, RidgeModel, f64)> {
    let sub = raw_train.select_features(selected)?;
    let (stats, sub_n, _) = normalize_with(&sub, &[])?;
    let (model, _) = ridge::fit_loocv(&sub_n, labels, class_names)?;
    let train_accuracy = model.accuracy(&sub_n, labels)?;
    Ok((stats, model, train_accuracy))
}

fn test_accuracy_on(
    model: &RidgeModel,
    stats: &NormalizationStats,
    raw_test: &FeatureMatrix<f32>,
    labels: &[usize],
) -> Result<f64> {
    let sub = raw_test.select_features(&model.active_features)?;
    model.accuracy(&apply_normalization(&sub, stats)?, labels)
}

/// Plain ROCKET: every feature, LOOCV ridge on the full training set.
pub fn run_full_rocket(
    train: &TimeSeriesDataset,
    test: &TimeSeriesDataset,
    kernels: KernelConfig,
    provider: &dyn FeatureProvider,
) -> Result<RunOutput> {
    run_plain(train, test, kernels, provider, RunMode::Full)
}

/// ROCKET with a small kernel count and no pruning.
pub fn run_small_rocket_control(
    train: &TimeSeriesDataset,
    test: &TimeSeriesDataset,
    kernels: KernelConfig,
    provider: &dyn FeatureProvider,
) -> Result<RunOutput> {
    run_plain(train, test, kernels, provider, RunMode::SmallRocket)
}

fn run_plain(
    train: &TimeSeriesDataset,
    test: &TimeSeriesDataset,
    kernels: KernelConfig,
    provider: &dyn FeatureProvider,
    mode: RunMode,
) -> Result<RunOutput> {
    check_pair(train, test)?;
    let mut clock = Clock::start();
    let bank = generate_kernels(kernels.count, train.series_length(), kernels.seed)?;
    let raw_train = provider.features(train, &bank)?;
    let raw_test = provider.features(test, &bank)?;
    clock.lap("transform");
    let all = raw_train.global_ids();
    let (stats, model, train_accuracy) =
        refit_selected(&raw_train, train.labels(), train.class_names(), &all)?;
    clock.lap("fit");
    let test_accuracy = test_accuracy_on(&model, &stats, &raw_test, test.labels())?;
    clock.lap("evaluate");
    let seeds = RunSeeds {
        kernel: kernels.seed,
        split: None,
        strategy: None,
    };
    let report = RunReport {
        mode,
        dataset: train.name().to_string(),
        n_train: train.len(),
        n_test: test.len(),
        series_length: train.series_length(),
        n_classes: train.n_classes(),
        n_kernels: kernels.count,
        seeds,
        sfd: None,
        c: None,
        retention_target: None,
        validation_fraction: None,
        n_validation: None,
        lambda_sfd: None,
        lambda_final: model.lambda,
        trace_steps: None,
        trace_file: None,
        selected_step: None,
        q_c: None,
        n_features_total: all.len(),
        n_features_selected: all.len(),
        retained_fraction: 1.0,
        train_accuracy,
        validation_accuracy: None,
        test_accuracy,
        full_model: None,
        timings: clock.timings,
    };
    let model = DetachModel {
        kernel_bank: bank,
        selected: all,
        normalization: stats,
        model,
        provenance: Provenance {
            mode,
            c: None,
            q_c: None,
            selected_step: None,
            trace_steps: None,
            seeds,
        },
    };
    Ok(RunOutput {
        model,
        report,
        trace: None,
    })
}

/// Split, transform, prune against a validation set, pick the size by the
/// trade-off objective, refit on train+validation, evaluate on test.
pub fn run_end_to_end(
    train: &TimeSeriesDataset,
    test: &TimeSeriesDataset,
    kernels: KernelConfig,
    sfd_config: &SfdConfig,
    tradeoff: &TradeoffConfig,
    provider: &dyn FeatureProvider,
) -> Result<RunOutput> {
    check_pair(train, test)?;
    sfd_config.validate()?;
    if tradeoff.c.is_nan() || tradeoff.c < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "c must be non-negative, got {}",
            tradeoff.c
        )));
    }
    let mut clock = Clock::start();
    let split = stratified_split_indices(
        train.labels(),
        train.class_names(),
        tradeoff.validation_fraction,
        tradeoff.seed,
    )?;
    let bank = generate_kernels(kernels.count, train.series_length(), kernels.seed)?;
    let raw_train = provider.features(train, &bank)?;
    let raw_test = provider.features(test, &bank)?;
    clock.lap("transform");

    let all = raw_train.global_ids();
    let (full_stats, full_model, full_train_acc) =
        refit_selected(&raw_train, train.labels(), train.class_names(), &all)?;
    let full_test_acc = test_accuracy_on(&full_model, &full_stats, &raw_test, test.labels())?;
    clock.lap("full_model");

    let sub_labels: Vec<usize> = split.train.iter().map(|&i| train.labels()[i]).collect();
    let val_labels: Vec<usize> = split
        .validation
        .iter()
        .map(|&i| train.labels()[i])
        .collect();
    let raw_sub = raw_train.select_rows(&split.train);
    let raw_val = raw_train.select_rows(&split.validation);
    let (_, sub_n, mut rest) = normalize_with(&raw_sub, &[&raw_val])?;
    let val_n = rest.pop().expect("one validation matrix");
    let outcome = sfd::run_sfd(
        Labeled {
            features: &sub_n,
            labels: &sub_labels,
        },
        Some(Labeled {
            features: &val_n,
            labels: &val_labels,
        }),
        train.class_names(),
        sfd_config,
    )?;
    clock.lap("sfd");

    let (step, q_c) = select_optimal_step(&outcome.trace, tradeoff.c)?;
    let chosen = &outcome.trace.steps[step];
    let selected = chosen.active.clone();
    let (stats, model, train_accuracy) =
        refit_selected(&raw_train, train.labels(), train.class_names(), &selected)?;
    clock.lap("refit");
    let test_accuracy = test_accuracy_on(&model, &stats, &raw_test, test.labels())?;
    clock.lap("evaluate");

    let seeds = RunSeeds {
        kernel: kernels.seed,
        split: Some(tradeoff.seed),
        strategy: Some(sfd_config.seed),
    };
    let report = RunReport {
        mode: RunMode::EndToEnd,
        dataset: train.name().to_string(),
        n_train: train.len(),
        n_test: test.len(),
        series_length: train.series_length(),
        n_classes: train.n_classes(),
        n_kernels: kernels.count,
        seeds,
        sfd: Some(*sfd_config),
        c: Some(tradeoff.c),
        retention_target: None,
        validation_fraction: Some(tradeoff.validation_fraction),
        n_validation: Some(split.validation.len()),
        lambda_sfd: Some(outcome.loocv.lambda),
        lambda_final: model.lambda,
        trace_steps: Some(outcome.trace.len()),
        trace_file: None,
        selected_step: Some(step),
        q_c: Some(q_c),
        n_features_total: all.len(),
        n_features_selected: selected.len(),
        retained_fraction: selected.len() as f64 / all.len() as f64,
        train_accuracy,
        validation_accuracy: chosen.validation_accuracy,
        test_accuracy,
        full_model: Some(FullModelMetrics {
            lambda: full_model.lambda,
            n_features: all.len(),
            train_accuracy: full_train_acc,
            test_accuracy: full_test_acc,
        }),
        timings: clock.timings,
    };
    let model = DetachModel {
        kernel_bank: bank,
        selected,
        normalization: stats,
        model,
        provenance: Provenance {
            mode: RunMode::EndToEnd,
            c: Some(tradeoff.c),
            q_c: Some(q_c),
            selected_step: Some(step),
            trace_steps: Some(outcome.trace.len()),
            seeds,
        },
    };
    Ok(RunOutput {
        model,
        report,
        trace: Some(outcome.trace),
    })
}

/// Prune on the whole training set and keep the step closest to `retention`.
pub fn run_fixed_retention(
    train: &TimeSeriesDataset,
    test: &TimeSeriesDataset,
    kernels: KernelConfig,
    retention: f64,
    sfd_config: &SfdConfig,
    provider: &dyn FeatureProvider,
) -> Result<RunOutput> {
    check_pair(train, test)?;
    sfd_config.validate()?;
    if !(retention > 0.0 && retention <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "retention {retention} not in (0, 1]"
        )));
    }
    let mut clock = Clock::start();
    let bank = generate_kernels(kernels.count, train.series_length(), kernels.seed)?;
    let raw_train = provider.features(train, &bank)?;
    let raw_test = provider.features(test, &bank)?;
    clock.lap("transform");

    let (full_stats, train_n, _) = normalize_with(&raw_train, &[])?;
    // no need to prune past the step closest to the target
    let run_config = SfdConfig {
        max_steps: sfd::steps_to_retention(
            raw_train.n_cols(),
            train.n_classes(),
            sfd_config,
            retention,
        ),
        ..*sfd_config
    };
    let outcome = sfd::run_sfd(
        Labeled {
            features: &train_n,
            labels: train.labels(),
        },
        None,
        train.class_names(),
        &run_config,
    )?;
    clock.lap("sfd");
    let full_test_acc =
        test_accuracy_on(&outcome.full_model, &full_stats, &raw_test, test.labels())?;
    let full_train_acc = outcome.trace.steps[0].train_accuracy;

    let step = sfd::model_at_retention(&outcome.trace, retention);
    let selected = outcome.trace.steps[step].active.clone();
    let (stats, model, train_accuracy) =
        refit_selected(&raw_train, train.labels(), train.class_names(), &selected)?;
    clock.lap("refit");
    let test_accuracy = test_accuracy_on(&model, &stats, &raw_test, test.labels())?;
    clock.lap("evaluate");

    let n_total = raw_train.n_cols();
    let seeds = RunSeeds {
        kernel: kernels.seed,
        split: None,
        strategy: Some(sfd_config.seed),
    };
    let report = RunReport {
        mode: RunMode::FixedRetention,
        dataset: train.name().to_string(),
        n_train: train.len(),
        n_test: test.len(),
        series_length: train.series_length(),
        n_classes: train.n_classes(),
        n_kernels: kernels.count,
        seeds,
        sfd: Some(*sfd_config),
        c: None,
        retention_target: Some(retention),
        validation_fraction: None,
        n_validation: None,
        lambda_sfd: Some(outcome.loocv.lambda),
        lambda_final: model.lambda,
        trace_steps: Some(outcome.trace.len()),
        trace_file: None,
        selected_step: Some(step),
        q_c: None,
        n_features_total: n_total,
        n_features_selected: selected.len(),
        retained_fraction: selected.len() as f64 / n_total as f64,
        train_accuracy,
        validation_accuracy: None,
        test_accuracy,
        full_model: Some(FullModelMetrics {
            lambda: outcome.full_model.lambda,
            n_features: n_total,
            train_accuracy: full_train_acc,
            test_accuracy: full_test_acc,
        }),
        timings: clock.timings,
    };
    let model = DetachModel {
        kernel_bank: bank,
        selected,
        normalization: stats,
        model,
        provenance: Provenance {
            mode: RunMode::FixedRetention,
            c: None,
            q_c: None,
            selected_step: Some(step),
            trace_steps: Some(outcome.trace.len()),
            seeds,
        },
    };
    Ok(RunOutput {
        model,
        report,
        trace: Some(outcome.trace),
    })
}
