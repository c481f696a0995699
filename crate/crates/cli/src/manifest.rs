use std::fs;
use std::path::Path;

use ctow::cotrain::CotrainConfig;
use ctow::metrics::Method;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identity of an input file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

impl Fingerprint {
    /// `cols` counts feature columns only.
    pub fn of(path: &Path, rows: usize, cols: usize) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::Ctow(e.into()))?;
        let digest = Sha256::digest(&bytes);
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        let file = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self {
            file,
            rows,
            cols,
            sha256,
        })
    }
}

/// Everything a command resolved before doing work. Two runs of the same
/// binary with equal manifests produce identical outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub dataset: Fingerprint,
    pub label_col: Option<String>,
    pub methods: Vec<Method>,
    pub label_rates: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub config: CotrainConfig,
}
