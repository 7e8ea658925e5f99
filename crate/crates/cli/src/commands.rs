use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use detach_rocket::features::write_atomic;
use detach_rocket::pipeline::{self, KernelConfig, RunOutput, TradeoffConfig};
use detach_rocket::{
    generate_kernels, load_ucr_tsv, load_ucr_tsv_aligned, DirectTransform, FeatureProvider,
    RunReport, SfdConfig, SplitTag, TimeSeriesDataset,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregate::{aggregate_csv, relative_change, summarize};
use crate::cache::CachedTransform;
use crate::config::{Mode, Overrides, RunConfig};

pub fn provider() -> Box<dyn FeatureProvider> {
    match CachedTransform::from_env() {
        Some(c) => Box::new(c),
        None => Box::new(DirectTransform),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_atomic(path, bytes)?;
    Ok(())
}

fn load_pair(cfg: &RunConfig) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    let train = load_ucr_tsv(cfg.train_path()?)?;
    let test = load_ucr_tsv_aligned(cfg.test_path()?, &train, SplitTag::Test)?;
    Ok((train, test))
}

#[derive(Serialize)]
struct ClassCount<'a> {
    label: &'a str,
    count: usize,
}

#[derive(Serialize)]
struct DatasetSummary<'a> {
    path: &'a Path,
    name: &'a str,
    n_instances: usize,
    series_length: usize,
    n_classes: usize,
    classes: Vec<ClassCount<'a>>,
    /// Every class has the two instances a stratified split needs.
    stratifiable: bool,
}

pub fn inspect(paths: &[PathBuf]) -> Result<()> {
    let datasets = paths
        .iter()
        .map(load_ucr_tsv)
        .collect::<detach_rocket::Result<Vec<_>>>()?;
    let summaries: Vec<DatasetSummary> = paths
        .iter()
        .zip(&datasets)
        .map(|(path, ds)| {
            let counts = ds.class_counts();
            DatasetSummary {
                path,
                name: ds.name(),
                n_instances: ds.len(),
                series_length: ds.series_length(),
                n_classes: ds.n_classes(),
                stratifiable: counts.iter().all(|&c| c >= 2),
                classes: ds
                    .class_names()
                    .iter()
                    .zip(counts)
                    .map(|(label, count)| ClassCount { label, count })
                    .collect(),
            }
        })
        .collect();
    println!("{}", serde_json::to_string_pretty(&summaries)?);
    Ok(())
}

/// Writes the kernel bank and raw feature matrices for the train (and test) split.
pub fn transform(cfg: &RunConfig) -> Result<()> {
    let train = load_ucr_tsv(cfg.train_path()?)?;
    let test = cfg
        .test
        .as_ref()
        .map(|p| load_ucr_tsv_aligned(p, &train, SplitTag::Test))
        .transpose()?;
    let bank = generate_kernels(cfg.kernels, train.series_length(), cfg.seed)?;
    let provider = provider();
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    bank.save(&cfg.out_dir.join("kernels.json"))?;
    for (stem, ds) in
        std::iter::once(("train_features", &train)).chain(test.iter().map(|t| ("test_features", t)))
    {
        let m = provider.features(ds, &bank)?;
        m.write_cache(&cfg.out_dir.join(stem))?;
        println!(
            "{stem}: {} x {} -> {}",
            m.n_rows(),
            m.n_cols(),
            cfg.out_dir.join(stem).with_extension("bin").display()
        );
    }
    Ok(())
}

/// Full ROCKET: transform, LOOCV ridge, evaluate.
pub fn train(cfg: &RunConfig) -> Result<()> {
    let (train, test) = load_pair(cfg)?;
    let out = pipeline::run_full_rocket(
        &train,
        &test,
        KernelConfig {
            count: cfg.kernels,
            seed: cfg.seed,
        },
        provider().as_ref(),
    )?;
    write_file(
        &cfg.out_dir.join("effective_config.json"),
        cfg.to_json()?.as_bytes(),
    )?;
    write_file(
        &cfg.out_dir.join("model.json"),
        out.model.to_json()?.as_bytes(),
    )?;
    write_file(
        &cfg.out_dir.join("report.json"),
        out.report.to_json()?.as_bytes(),
    )?;
    println!(
        "{}: train accuracy {:.4}, test accuracy {:.4}, lambda {}",
        out.report.dataset,
        out.report.train_accuracy,
        out.report.test_accuracy,
        out.report.lambda_final
    );
    Ok(())
}

fn run_repetition(
    train: &TimeSeriesDataset,
    test: &TimeSeriesDataset,
    cfg: &RunConfig,
    rep: usize,
    provider: &dyn FeatureProvider,
) -> Result<RunOutput> {
    let seed = cfg.seed.wrapping_add(rep as u64);
    let kernels = KernelConfig {
        count: cfg.kernels,
        seed,
    };
    let sfd = SfdConfig {
        p: cfg.p,
        max_steps: cfg.max_steps,
        strategy: cfg.strategy,
        seed,
    };
    let out = match cfg.mode {
        Mode::E2e => pipeline::run_end_to_end(
            train,
            test,
            kernels,
            &sfd,
            &TradeoffConfig {
                c: cfg.c,
                validation_fraction: cfg.validation_fraction,
                seed,
            },
            provider,
        ),
        Mode::Fixed => {
            pipeline::run_fixed_retention(train, test, kernels, cfg.retention, &sfd, provider)
        }
    }?;
    Ok(out)
}

/// Runs every repetition, writing `run_NNN_report.json`, `run_NNN_trace.csv`
/// and `aggregate.csv` into the output directory.
pub fn detach_runs(
    train: &TimeSeriesDataset,
    test: &TimeSeriesDataset,
    cfg: &RunConfig,
    provider: &dyn FeatureProvider,
) -> Result<Vec<RunReport>> {
    if cfg.repetitions == 0 {
        bail!("repetitions must be at least 1");
    }
    write_file(
        &cfg.out_dir.join("effective_config.json"),
        cfg.to_json()?.as_bytes(),
    )?;
    let reports = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| -> Result<RunReport> {
            let out = run_repetition(train, test, cfg, rep, provider)?;
            let mut report = out.report;
            if let Some(trace) = &out.trace {
                let name = format!("run_{rep:03}_trace.csv");
                write_file(&cfg.out_dir.join(&name), trace.to_csv().as_bytes())?;
                report.trace_file = Some(name);
            }
            write_file(
                &cfg.out_dir.join(format!("run_{rep:03}_report.json")),
                report.to_json()?.as_bytes(),
            )?;
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;
    write_file(
        &cfg.out_dir.join("aggregate.csv"),
        &aggregate_csv(&reports)?,
    )?;
    Ok(reports)
}

pub fn detach(cfg: &RunConfig) -> Result<()> {
    let (train, test) = load_pair(cfg)?;
    let reports = detach_runs(&train, &test, cfg, provider().as_ref())?;
    let acc: Vec<f64> = reports.iter().map(|r| r.test_accuracy).collect();
    let features: Vec<f64> = reports
        .iter()
        .map(|r| r.n_features_selected as f64)
        .collect();
    let (acc, features) = (summarize(&acc), summarize(&features));
    println!(
        "{}: {} run(s), test accuracy {:.4} ± {:.4}, {:.1} features kept; results in {}",
        train.name(),
        acc.n,
        acc.mean,
        acc.std,
        features.mean,
        cfg.out_dir.display()
    );
    Ok(())
}

/// A manifest entry: a dataset name plus any configuration overrides.
struct ManifestEntry {
    name: String,
    overrides: Overrides,
}

fn parse_manifest(path: &Path) -> Result<(Overrides, Vec<ManifestEntry>)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut doc: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)
        .with_context(|| format!("parsing manifest {}", path.display()))?;
    let defaults: Overrides = match doc.remove("defaults") {
        Some(v) => serde_json::from_value(v).context("manifest `defaults`")?,
        None => Overrides::default(),
    };
    let Some(serde_json::Value::Array(items)) = doc.remove("datasets") else {
        bail!("manifest {} needs a `datasets` array", path.display());
    };
    if let Some(key) = doc.keys().next() {
        bail!("unknown manifest key `{key}`");
    }
    let entries = items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let serde_json::Value::Object(mut obj) = item else {
                bail!("manifest dataset #{i} is not an object");
            };
            let Some(serde_json::Value::String(name)) = obj.remove("name") else {
                bail!("manifest dataset #{i} needs a string `name`");
            };
            let overrides: Overrides = serde_json::from_value(serde_json::Value::Object(obj))
                .with_context(|| format!("manifest dataset `{name}`"))?;
            Ok(ManifestEntry {
                name,
                overrides: overrides.rebase(base),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if entries.is_empty() {
        bail!("manifest {} lists no datasets", path.display());
    }
    Ok((defaults.rebase(base), entries))
}

/// Per-dataset configurations: `base` < manifest defaults < entry < `flags`.
pub fn benchmark_configs(
    manifest: &Path,
    base: &Overrides,
    flags: &Overrides,
) -> Result<Vec<(String, RunConfig)>> {
    let (defaults, entries) = parse_manifest(manifest)?;
    let layered = base.layer(&defaults);
    let root = RunConfig::resolve(&layered.layer(flags)).out_dir;
    Ok(entries
        .into_iter()
        .map(|e| {
            let mut cfg = RunConfig::resolve(&layered.layer(&e.overrides).layer(flags));
            cfg.out_dir = root.join(e.name.replace(['/', '\\'], "_"));
            (e.name, cfg)
        })
        .collect())
}

pub const BENCHMARK_HEADER: [&str; 12] = [
    "dataset",
    "status",
    "runs",
    "full_acc_mean",
    "full_acc_std",
    "pruned_acc_mean",
    "pruned_acc_std",
    "relative_change_mean",
    "relative_change_std",
    "n_features_mean",
    "retained_fraction_mean",
    "error",
];

fn benchmark_row(name: &str, cfg: &RunConfig, provider: &dyn FeatureProvider) -> Vec<String> {
    let result = load_pair(cfg).and_then(|(train, test)| detach_runs(&train, &test, cfg, provider));
    match result {
        Ok(reports) => {
            let col = |f: &dyn Fn(&RunReport) -> f64| {
                summarize(&reports.iter().map(f).collect::<Vec<_>>())
            };
            let full = col(&|r| r.full_model.map_or(f64::NAN, |f| f.test_accuracy));
            let pruned = col(&|r| r.test_accuracy);
            let change = col(&|r| relative_change(r).unwrap_or(f64::NAN));
            let features = col(&|r| r.n_features_selected as f64);
            let retained = col(&|r| r.retained_fraction);
            vec![
                name.to_string(),
                "ok".into(),
                reports.len().to_string(),
                full.mean.to_string(),
                full.std.to_string(),
                pruned.mean.to_string(),
                pruned.std.to_string(),
                change.mean.to_string(),
                change.std.to_string(),
                features.mean.to_string(),
                retained.mean.to_string(),
                String::new(),
            ]
        }
        Err(e) => {
            let mut row = vec![name.to_string(), "failed".into()];
            row.extend(std::iter::repeat_n(
                String::new(),
                BENCHMARK_HEADER.len() - 3,
            ));
            row.push(describe(&e));
            row
        }
    }
}

/// One CSV row per dataset; a failing dataset is marked and the rest continue.
pub fn benchmark(configs: &[(String, RunConfig)], out_dir: &Path) -> Result<()> {
    let provider = provider();
    let rows: Vec<Vec<String>> = configs
        .par_iter()
        .map(|(name, cfg)| benchmark_row(name, cfg, provider.as_ref()))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BENCHMARK_HEADER)?;
    for row in &rows {
        w.write_record(row)?;
    }
    let path = out_dir.join("benchmark.csv");
    write_file(&path, &w.into_inner()?)?;
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| r[1] == "failed")
        .map(|r| r[0].as_str())
        .collect();
    println!(
        "{} dataset(s), {} failed{}; table in {}",
        rows.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({})", failed.join(", "))
        },
        path.display()
    );
    Ok(())
}

/// The error chain, skipping causes already spelled out by their parent.
pub fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
    }
    msg
}
