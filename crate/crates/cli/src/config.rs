//! Run configuration: built-in defaults, overridden by a JSON config file,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use detach_rocket::ridge::lambda_grid;
use detach_rocket::Strategy;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Split off a validation set and pick the model size by the trade-off objective.
    E2e,
    /// Prune on the full training set to a fixed retention.
    Fixed,
}

/// Every tunable parameter, all optional so that layers can be merged.
/// The same struct is read from the config file and from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    /// Training split (UCR TSV).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test split (UCR TSV).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Number of random kernels K.
    #[arg(long)]
    pub kernels: Option<usize>,
    /// Master seed; repetition i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of active features detached per step.
    #[arg(long)]
    pub p: Option<f64>,
    /// Maximum number of detachment steps.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Detachment strategy: sfd, random or inverse_sfd.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Trade-off weight of the pruned fraction (e2e mode).
    #[arg(long)]
    pub c: Option<f64>,
    /// Validation fraction of the stratified split (e2e mode).
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Target retained fraction (fixed mode).
    #[arg(long)]
    pub retention: Option<f64>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Output directory (default `out`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Maximum number of worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Overrides {
    /// `other` wins wherever it is set.
    pub fn layer(&self, other: &Overrides) -> Overrides {
        macro_rules! pick {
            ($($f:ident),*) => { Overrides { $($f: other.$f.clone().or_else(|| self.$f.clone())),* } };
        }
        pick!(
            train,
            test,
            kernels,
            seed,
            p,
            max_steps,
            strategy,
            mode,
            c,
            validation_fraction,
            retention,
            repetitions,
            out_dir,
            jobs
        )
    }

    /// Makes relative paths relative to `base`.
    pub fn rebase(mut self, base: &Path) -> Overrides {
        for path in [&mut self.train, &mut self.test, &mut self.out_dir]
            .into_iter()
            .flatten()
        {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        self
    }

    pub fn from_file(path: &Path) -> Result<Overrides> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let parsed: Overrides = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(parsed.rebase(path.parent().unwrap_or(Path::new("."))))
    }
}

/// Fully resolved configuration, as printed by `--print-effective-config`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub kernels: usize,
    pub seed: u64,
    pub p: f64,
    pub max_steps: usize,
    pub strategy: Strategy,
    pub mode: Mode,
    pub c: f64,
    pub validation_fraction: f64,
    pub retention: f64,
    pub repetitions: usize,
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
    /// Fixed λ grid searched by leave-one-out CV (not configurable).
    pub lambda_grid: Vec<f64>,
}

impl RunConfig {
    pub fn resolve(o: &Overrides) -> RunConfig {
        RunConfig {
            train: o.train.clone(),
            test: o.test.clone(),
            kernels: o.kernels.unwrap_or(10_000),
            seed: o.seed.unwrap_or(0),
            p: o.p.unwrap_or(0.05),
            max_steps: o.max_steps.unwrap_or(150),
            strategy: o.strategy.unwrap_or(Strategy::Sfd),
            mode: o.mode.unwrap_or(Mode::E2e),
            c: o.c.unwrap_or(0.1),
            validation_fraction: o.validation_fraction.unwrap_or(0.33),
            retention: o.retention.unwrap_or(0.10),
            repetitions: o.repetitions.unwrap_or(1),
            out_dir: o.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
            jobs: o.jobs,
            lambda_grid: lambda_grid(),
        }
    }

    pub fn train_path(&self) -> Result<&Path> {
        self.train
            .as_deref()
            .context("no training set given (--train or \"train\" in the config file)")
    }

    pub fn test_path(&self) -> Result<&Path> {
        self.test
            .as_deref()
            .context("no test set given (--test or \"test\" in the config file)")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_layers_win() {
        let file = Overrides {
            kernels: Some(500),
            c: Some(1.0),
            ..Overrides::default()
        };
        let flags = Overrides {
            c: Some(0.5),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(&file.layer(&flags));
        assert_eq!(cfg.kernels, 500);
        assert_eq!(cfg.c, 0.5);
        assert_eq!(cfg.p, 0.05);
        assert_eq!(cfg.max_steps, 150);
        assert_eq!(cfg.validation_fraction, 0.33);
        assert_eq!(cfg.lambda_grid.len(), 20);
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        assert!(serde_json::from_str::<Overrides>(r#"{"kernel": 5}"#).is_err());
        let o: Overrides =
            serde_json::from_str(r#"{"strategy": "inverse_sfd", "mode": "fixed"}"#).unwrap();
        assert_eq!(o.strategy, Some(Strategy::InverseSfd));
        assert_eq!(o.mode, Some(Mode::Fixed));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let o = Overrides {
            train: Some("a/x_TRAIN.tsv".into()),
            test: Some("/abs/x_TEST.tsv".into()),
            ..Overrides::default()
        }
        .rebase(Path::new("/cfg"));
        assert_eq!(o.train.unwrap(), PathBuf::from("/cfg/a/x_TRAIN.tsv"));
        assert_eq!(o.test.unwrap(), PathBuf::from("/abs/x_TEST.tsv"));
    }
}
