//! Time series classification with random convolutional kernels, a closed-form
//! ridge classifier, and sequential feature detachment (SFD) to prune the
//! kernel features down to a compact model.
//!
//! The pipeline:
//!
//! 1. [`transform`] maps each series to `2K` pooled features (MAX, PPV per kernel).
//! 2. [`dataset`] normalizes features with training statistics.
//! 3. [`ridge`] fits the classifier, selecting λ by exact leave-one-out CV.
//! 4. [`sfd`] repeatedly refits and detaches the least important features.
//! 5. [`pipeline`] picks the model size and evaluates it end to end.
//!
//! With the default `parallel` feature the transform, Gram products and
//! λ grid run on rayon; results are identical to the sequential build.

pub mod dataset;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod ridge;
pub mod sfd;
pub mod transform;

pub use dataset::{
    apply_normalization, fit_normalization, load_ucr_tsv, load_ucr_tsv_aligned,
    stratified_subsample_split, NormalizationStats, SplitTag, TimeSeriesDataset,
};
pub use error::{Error, ErrorKind, Result};
pub use features::{FeatureId, FeatureMatrix, Pooling};
pub use pipeline::{
    run_end_to_end, run_fixed_retention, run_full_rocket, run_small_rocket_control,
    select_optimal_step, DetachModel, DirectTransform, FeatureProvider, KernelConfig, RunOutput,
    RunReport, TradeoffConfig,
};
pub use ridge::{RidgeModel, Solver};
pub use sfd::{run_sfd, PruningTrace, SfdConfig, Strategy};
pub use transform::{generate_kernels, transform_dataset, Kernel, KernelBank};
