//! Datasets, loaders, synthetic generators, splitting and model files.

mod delimited;
mod idx;
mod model_file;
mod split;
mod synth;

pub use delimited::{load_delimited, parse_delimited, write_delimited, ColumnRef, DelimitedSchema};
pub use idx::{encode_idx, load_idx, parse_idx, tag_second_domain, SECOND_DOMAIN_GAIN, SECOND_DOMAIN_OFFSET};
pub use model_file::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION, MAGIC};
pub use split::{split_normalize, NormStats};
pub use synth::{synth_two_domain, synth_two_domain_with, SynthConfig, BASE_FEATURES};

use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::numerics::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("file length: {0}")]
    Length(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("stratification: {0}")]
    Stratum(String),
    #[error("dataset: {0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnKind {
    /// Raw value range observed at load time.
    Numeric { min: f64, max: f64 },
    /// One indicator column of a one-hot encoded categorical source column.
    OneHot { source: String, level: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
}

/// Feature matrix with utility and sensitive labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `n × d` features.
    pub x: Tensor,
    pub y_util: Vec<usize>,
    /// Sensitive labels; `None` until assigned (IDX images carry none).
    pub s: Option<Vec<usize>>,
    pub columns: Vec<ColumnMeta>,
    pub utility_name: String,
    pub sensitive_name: String,
    /// Original label text for each utility class code.
    pub utility_levels: Vec<String>,
    pub sensitive_levels: Vec<String>,
    /// `(height, width)` for image-shaped rows.
    pub image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn sensitive(&self) -> Result<&[usize], DataError> {
        self.s
            .as_deref()
            .ok_or_else(|| DataError::Invalid("sensitive labels are not assigned".into()))
    }

    pub fn n_utility_classes(&self) -> usize {
        self.utility_levels
            .len()
            .max(self.y_util.iter().max().map_or(0, |m| m + 1))
    }

    pub fn n_sensitive_classes(&self) -> usize {
        let seen = self.s.as_ref().and_then(|s| s.iter().max()).map_or(0, |m| m + 1);
        self.sensitive_levels.len().max(seen)
    }

    /// Checks row-count agreement between features and labels.
    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.len();
        if self.y_util.len() != n {
            return Err(DataError::Invalid(format!(
                "{} utility labels for {n} rows",
                self.y_util.len()
            )));
        }
        if let Some(s) = &self.s {
            if s.len() != n {
                return Err(DataError::Invalid(format!("{} sensitive labels for {n} rows", s.len())));
            }
        }
        if self.columns.len() != self.n_features() {
            return Err(DataError::Invalid(format!(
                "{} column descriptors for {} features",
                self.columns.len(),
                self.n_features()
            )));
        }
        Ok(())
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y_util: rows.iter().map(|&r| self.y_util[r]).collect(),
            s: self.s.as_ref().map(|s| rows.iter().map(|&r| s[r]).collect()),
            ..self.clone_meta()
        }
    }

    /// Same labels and metadata with a replaced feature matrix.
    pub fn with_features(&self, x: Tensor, columns: Vec<ColumnMeta>) -> Dataset {
        Dataset {
            x,
            y_util: self.y_util.clone(),
            s: self.s.clone(),
            columns,
            image_shape: None,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            x: Tensor::zeros(&[1, 1]),
            y_util: Vec::new(),
            s: None,
            columns: self.columns.clone(),
            utility_name: self.utility_name.clone(),
            sensitive_name: self.sensitive_name.clone(),
            utility_levels: self.utility_levels.clone(),
            sensitive_levels: self.sensitive_levels.clone(),
            image_shape: self.image_shape,
        }
    }

    /// SHA-256 over shape, feature bits and labels, truncated to 64 bits.
    /// Identifies "the same dataset" across runs.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for &d in self.x.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in self.x.data() {
            h.update(v.to_bits().to_le_bytes());
        }
        for &y in &self.y_util {
            h.update((y as u64).to_le_bytes());
        }
        if let Some(s) = &self.s {
            for &v in s {
                h.update((v as u64).to_le_bytes());
            }
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
    }
}
