//! Run directories and their manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sdpnn::data::DatasetManifest;
use sdpnn::lifted::ProblemMeta;
use sdpnn::linalg;
use sdpnn::network::SgdConfig;
use sdpnn::rounding::RoundingOptions;
use sdpnn::solver::SolverOptions;

use crate::dataset::DatasetSpec;

pub const MANIFEST: &str = "manifest.json";
pub const LAMBDA_BIN: &str = "lambda_star.bin";
pub const LAMBDA_JSON: &str = "lambda_star.json";
pub const TRACE_CSV: &str = "trace.csv";
pub const WEIGHTS_JSON: &str = "weights.json";
pub const PHI_CSV: &str = "phi_history.csv";
pub const ROUND_JSON: &str = "round.json";
pub const LOSS_CSV: &str = "loss_curve.csv";
pub const METRICS_JSON: &str = "metrics.json";

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub gamma: f64,
    pub bias: bool,
    pub solver: SolverOptions,
    pub rounding: RoundingOptions,
    pub sgd: SgdConfig,
    pub sgd_width: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            bail!("invalid parameter `gamma`: must be finite and nonnegative, got {}", self.gamma);
        }
        self.solver.validate()?;
        self.rounding.validate()?;
        self.sgd.validate()?;
        if self.sgd_width == 0 {
            bail!("invalid parameter `width`: must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: String,
    pub objective: f64,
    pub iterations: usize,
    pub eq_residual: f64,
    pub min_eig: f64,
    pub min_nonneg: f64,
    pub dual_bound: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetManifest,
    pub problem: Option<ProblemMeta>,
    pub solve: Option<SolveSummary>,
    /// Output file name → SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: ExperimentConfig, dataset: DatasetManifest) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            dataset,
            problem: None,
            solve: None,
            outputs: BTreeMap::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_file(dir, MANIFEST, &serde_json::to_vec_pretty(self)?)
    }

    /// Write `bytes` to `dir/name` and record its hash.
    pub fn write_output(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        write_file(dir, name, bytes)?;
        self.outputs.insert(name.to_string(), linalg::sha256_hex(bytes));
        Ok(())
    }

    /// Read `dir/name`, failing unless its hash matches the recorded one.
    pub fn read_verified(&self, dir: &Path, name: &str) -> Result<Vec<u8>> {
        let Some(expected) = self.outputs.get(name) else {
            bail!("{} does not record {name}", dir.join(MANIFEST).display());
        };
        let path = dir.join(name);
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let actual = linalg::sha256_hex(&bytes);
        if &actual != expected {
            bail!(
                "stale artifact: {} has hash {actual}, manifest records {expected}",
                path.display()
            );
        }
        Ok(bytes)
    }
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}
