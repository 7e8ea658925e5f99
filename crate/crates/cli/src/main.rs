//! `detach-rocket` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input or parameters,
//! 3 numerical failure.

mod aggregate;
mod cache;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use detach_rocket::{Error, ErrorKind};

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "detach-rocket",
    version,
    about = "Random-kernel time series classification with sequential feature detachment"
)]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the fully resolved configuration and exit.
    #[arg(long, global = true)]
    print_effective_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize UCR TSV files: size, length, class balance.
    Inspect {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Generate kernels and write the raw feature matrices.
    Transform {
        #[command(flatten)]
        args: Overrides,
    },
    /// Fit and evaluate the full (unpruned) classifier.
    Train {
        #[command(flatten)]
        args: Overrides,
    },
    /// Prune with sequential feature detachment, once per repetition.
    Detach {
        #[command(flatten)]
        args: Overrides,
    },
    /// Run `detach` over every dataset in a JSON manifest.
    Benchmark {
        manifest: PathBuf,
        #[command(flatten)]
        args: Overrides,
    },
}

fn base_overrides(cli: &Cli) -> Result<Overrides> {
    match &cli.config {
        Some(path) => Overrides::from_file(path),
        None => Ok(Overrides::default()),
    }
}

fn set_jobs(jobs: Option<usize>) -> Result<()> {
    match jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
            Ok(())
        }
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let base = base_overrides(&cli)?;
    match &cli.command {
        Command::Inspect { paths } => commands::inspect(paths),
        Command::Transform { args } | Command::Train { args } | Command::Detach { args } => {
            let cfg = RunConfig::resolve(&base.layer(args));
            if cli.print_effective_config {
                println!("{}", cfg.to_json()?);
                return Ok(());
            }
            set_jobs(cfg.jobs)?;
            match &cli.command {
                Command::Transform { .. } => commands::transform(&cfg),
                Command::Train { .. } => commands::train(&cfg),
                _ => commands::detach(&cfg),
            }
        }
        Command::Benchmark { manifest, args } => {
            let configs = commands::benchmark_configs(manifest, &base, args)?;
            let root = RunConfig::resolve(&base.layer(args));
            if cli.print_effective_config {
                let all: Vec<_> = configs
                    .iter()
                    .map(|(name, cfg)| serde_json::json!({ "dataset": name, "config": cfg }))
                    .collect();
                println!("{}", serde_json::to_string_pretty(&all)?);
                return Ok(());
            }
            set_jobs(root.jobs)?;
            commands::benchmark(&configs, &root.out_dir)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.kind() {
                ErrorKind::Io => 1,
                ErrorKind::Validation => 2,
                ErrorKind::Numerical => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", commands::describe(&err));
            let stratification = err.chain().any(|c| {
                matches!(
                    c.downcast_ref::<Error>(),
                    Some(Error::Stratification { .. })
                )
            });
            if stratification {
                eprintln!(
                    "hint: the validation split needs two instances of every class; \
                     use `--mode fixed --retention <fraction>` to prune on the full training set instead"
                );
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
