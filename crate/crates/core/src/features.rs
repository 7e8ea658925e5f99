//! Dense row-major feature matrices produced by the kernel transform.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage element of a [`FeatureMatrix`]. Arithmetic is always done in `f64`.
pub trait Element: Copy + Send + Sync + PartialEq + std::fmt::Debug + 'static {
    const DTYPE: &'static str;
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
    fn to_le_bytes_vec(self) -> Vec<u8>;
    fn from_le_slice(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: &'static str = "f32";
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_le_bytes_vec(self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }
    fn from_le_slice(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Element for f64 {
    const DTYPE: &'static str = "f64";
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_le_bytes_vec(self) -> Vec<u8> {
        self.to_le_bytes().to_vec()
    }
    fn from_le_slice(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Max,
    Ppv,
}

/// Identity of one feature column: which kernel produced it and how it was pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureId {
    pub kernel: usize,
    pub pooling: Pooling,
}

impl FeatureId {
    /// Column index of this feature in the full `2K` interleaved layout.
    pub fn global(self) -> usize {
        2 * self.kernel
            + match self.pooling {
                Pooling::Max => 0,
                Pooling::Ppv => 1,
            }
    }

    pub fn from_global(id: usize) -> Self {
        FeatureId {
            kernel: id / 2,
            pooling: if id.is_multiple_of(2) {
                Pooling::Max
            } else {
                Pooling::Ppv
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T: Element = f32> {
    n_rows: usize,
    n_cols: usize,
    values: Vec<T>,
    feature_ids: Vec<FeatureId>,
}

impl<T: Element> FeatureMatrix<T> {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        values: Vec<T>,
        feature_ids: Vec<FeatureId>,
    ) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                values.len()
            )));
        }
        if feature_ids.len() != n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{} feature ids for {n_cols} columns",
                feature_ids.len()
            )));
        }
        Ok(FeatureMatrix {
            n_rows,
            n_cols,
            values,
            feature_ids,
        })
    }

    /// Builds a matrix whose columns carry consecutive global ids `0..n_cols`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let values = rows.iter().flatten().map(|&v| T::from_f64(v)).collect();
        let ids = (0..n_cols).map(FeatureId::from_global).collect();
        Self::new(n_rows, n_cols, values, ids)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn feature_ids(&self) -> &[FeatureId] {
        &self.feature_ids
    }

    pub fn global_ids(&self) -> Vec<usize> {
        self.feature_ids.iter().map(|f| f.global()).collect()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.values[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.n_rows).map(move |r| self.get(r, col))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.to_f64().is_finite())
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix<T> {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            values,
            feature_ids: self.feature_ids.clone(),
        }
    }

    /// Column positions of the requested global feature ids.
    pub fn positions_of(&self, global_ids: &[usize]) -> Result<Vec<usize>> {
        let identity = global_ids.len() == self.n_cols
            && self
                .feature_ids
                .iter()
                .zip(global_ids)
                .all(|(f, &g)| f.global() == g);
        if identity {
            return Ok((0..self.n_cols).collect());
        }
        let lookup: HashMap<usize, usize> = self
            .feature_ids
            .iter()
            .enumerate()
            .map(|(pos, f)| (f.global(), pos))
            .collect();
        global_ids
            .iter()
            .map(|g| {
                lookup.get(g).copied().ok_or_else(|| {
                    Error::DimensionMismatch(format!("feature {g} is not a column of the matrix"))
                })
            })
            .collect()
    }

    /// Keeps the columns carrying the given global feature ids, in the given order.
    pub fn select_features(&self, global_ids: &[usize]) -> Result<FeatureMatrix<T>> {
        let positions = self.positions_of(global_ids)?;
        Ok(self.select_positions(&positions))
    }

    pub(crate) fn select_positions(&self, positions: &[usize]) -> FeatureMatrix<T> {
        let mut values = Vec::with_capacity(self.n_rows * positions.len());
        for r in 0..self.n_rows {
            let row = self.row(r);
            values.extend(positions.iter().map(|&p| row[p]));
        }
        FeatureMatrix {
            n_rows: self.n_rows,
            n_cols: positions.len(),
            values,
            feature_ids: positions.iter().map(|&p| self.feature_ids[p]).collect(),
        }
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> FeatureMatrix<U> {
        FeatureMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
            feature_ids: self.feature_ids.clone(),
        }
    }

    pub(crate) fn from_parts_unchecked(
        n_rows: usize,
        n_cols: usize,
        values: Vec<T>,
        feature_ids: Vec<FeatureId>,
    ) -> Self {
        debug_assert_eq!(values.len(), n_rows * n_cols);
        FeatureMatrix {
            n_rows,
            n_cols,
            values,
            feature_ids,
        }
    }

    /// Writes `<stem>.bin` (little-endian values, row-major) and `<stem>.json` (shape, dtype, ids).
    pub fn write_cache(&self, stem: &Path) -> Result<()> {
        let (bin, json) = cache_paths(stem);
        let sidecar = CacheSidecar {
            shape: [self.n_rows, self.n_cols],
            dtype: T::DTYPE.to_string(),
            feature_ids: self.feature_ids.clone(),
        };
        let mut bytes = Vec::with_capacity(self.values.len() * std::mem::size_of::<T>());
        for v in &self.values {
            bytes.extend(v.to_le_bytes_vec());
        }
        write_atomic(&bin, &bytes)?;
        write_atomic(&json, serde_json::to_string(&sidecar)?.as_bytes())
    }

    pub fn read_cache(stem: &Path) -> Result<Self> {
        let (bin, json) = cache_paths(stem);
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let sidecar: CacheSidecar = serde_json::from_str(&text)?;
        if sidecar.dtype != T::DTYPE {
            return Err(Error::DimensionMismatch(format!(
                "cache dtype {} but {} requested",
                sidecar.dtype,
                T::DTYPE
            )));
        }
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        let width = std::mem::size_of::<T>();
        let [n_rows, n_cols] = sidecar.shape;
        if bytes.len() != n_rows * n_cols * width {
            return Err(Error::DimensionMismatch(format!(
                "{} holds {} bytes, expected {}",
                bin.display(),
                bytes.len(),
                n_rows * n_cols * width
            )));
        }
        let values = bytes.chunks_exact(width).map(T::from_le_slice).collect();
        Self::new(n_rows, n_cols, values, sidecar.feature_ids)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheSidecar {
    shape: [usize; 2],
    dtype: String,
    feature_ids: Vec<FeatureId>,
}

fn cache_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn global_ids_interleave_max_then_ppv() {
        let max = FeatureId {
            kernel: 3,
            pooling: Pooling::Max,
        };
        let ppv = FeatureId {
            kernel: 3,
            pooling: Pooling::Ppv,
        };
        assert_eq!(max.global(), 6);
        assert_eq!(ppv.global(), 7);
        assert_eq!(FeatureId::from_global(7), ppv);
    }

    #[test]
    fn select_features_follows_requested_order() {
        let m =
            FeatureMatrix::<f64>::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let s = m.select_features(&[2, 0]).unwrap();
        assert_eq!(s.values(), &[3.0, 1.0, 6.0, 4.0]);
        assert_eq!(s.global_ids(), vec![2, 0]);
        assert!(m.select_features(&[9]).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = FeatureMatrix::<f32>::from_rows(&[vec![1.5, -2.0], vec![0.0, 3.25]]).unwrap();
        let stem = dir.path().join("feat");
        m.write_cache(&stem).unwrap();
        let back = FeatureMatrix::<f32>::read_cache(&stem).unwrap();
        assert_eq!(back, m);
        assert!(FeatureMatrix::<f64>::read_cache(&stem).is_err());
    }

    #[test]
    fn new_rejects_bad_shape() {
        assert!(FeatureMatrix::<f32>::new(2, 2, vec![0.0; 3], vec![]).is_err());
    }
}
