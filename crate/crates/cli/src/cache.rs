//! On-disk feature cache keyed by (dataset content hash, K, kernel seed).

use std::fmt::Write as _;
use std::path::PathBuf;

use detach_rocket::transform::transform_dataset;
use detach_rocket::{FeatureMatrix, FeatureProvider, KernelBank, TimeSeriesDataset};
use sha2::{Digest, Sha256};

pub const CACHE_ENV: &str = "DETACH_ROCKET_CACHE";

pub struct CachedTransform {
    dir: PathBuf,
}

impl CachedTransform {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CachedTransform { dir: dir.into() }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_ENV)
            .filter(|v| !v.is_empty())
            .map(Self::new)
    }

    fn stem(&self, ds: &TimeSeriesDataset, bank: &KernelBank) -> PathBuf {
        let mut key = String::new();
        for b in Sha256::digest(ds.to_ucr_tsv().as_bytes()).iter().take(16) {
            write!(key, "{b:02x}").unwrap();
        }
        self.dir
            .join(format!("{key}_k{}_s{}", bank.len(), bank.seed))
    }
}

impl FeatureProvider for CachedTransform {
    fn features(
        &self,
        ds: &TimeSeriesDataset,
        bank: &KernelBank,
    ) -> detach_rocket::Result<FeatureMatrix<f32>> {
        let stem = self.stem(ds, bank);
        if let Ok(m) = FeatureMatrix::<f32>::read_cache(&stem) {
            if m.n_rows() == ds.len() && m.n_cols() == bank.n_features() {
                return Ok(m);
            }
        }
        let m = transform_dataset(ds, bank)?;
        // a cache that cannot be written only costs time
        if let Err(e) = std::fs::create_dir_all(&self.dir)
            .map_err(|e| e.to_string())
            .and_then(|_| m.write_cache(&stem).map_err(|e| e.to_string()))
        {
            eprintln!("warning: feature cache not written: {e}");
        }
        Ok(m)
    }
}
