//! Run configuration: a TOML file with one table per subcommand. Every key is
//! optional; command-line flags override file values. The merged result is
//! written back as `run_config.toml` in the output directory, and running
//! with `--config <that file>` reproduces the run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spikepack_core::neurons::{Comparator, Rounding};
use spikepack_core::neurosim::SimConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SimKind {
    #[default]
    Both,
    Lif,
    Spikepack,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; not echoed, since it is where the echo lives.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub format: ReportFormat,
    pub equiv: EquivConfig,
    pub mi: MiConfig,
    pub train: TrainConfig,
    pub convert: ConvertConfig,
    pub infer: InferConfig,
    pub simulate: SimulateConfig,
    pub report: ReportConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Io(format!("cannot serialize run config: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquivConfig {
    pub cases: usize,
    pub comparator: Comparator,
    pub rounding: Rounding,
    pub taus: Vec<f64>,
    pub max_timesteps: usize,
    /// Check every integer level for each `T` up to `roundtrip_max_timesteps`
    /// instead of a random sample.
    pub exhaustive_roundtrip: bool,
    pub roundtrip_max_timesteps: usize,
    pub max_counterexamples: usize,
}

impl Default for EquivConfig {
    fn default() -> Self {
        Self {
            cases: 100_000,
            comparator: Comparator::AtLeast,
            rounding: Rounding::GreedyFloor,
            taus: vec![1.5, 2.0, 3.0],
            max_timesteps: 16,
            exhaustive_roundtrip: false,
            roundtrip_max_timesteps: 12,
            max_counterexamples: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiConfig {
    pub n: Vec<usize>,
    pub timesteps: Vec<usize>,
    pub p: f64,
    pub sigma2: f64,
    pub tau: f64,
    /// Explicit SpikePack threshold; the six-sigma rule when absent.
    pub theta: Option<f64>,
    pub samples: usize,
    pub lif_theta: f64,
    pub stderr_tolerance: f64,
}

impl Default for MiConfig {
    fn default() -> Self {
        Self {
            n: vec![4, 8, 16],
            timesteps: vec![4, 8, 16],
            p: 0.5,
            sigma2: 1.0,
            tau: 2.0,
            theta: None,
            samples: 1_000_000,
            lif_theta: 1.0,
            stderr_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// `builtin:<name>`, a CSV file, or a raw image file with a `.shape` sidecar.
    pub data: String,
    pub samples: usize,
    pub hidden: Vec<usize>,
    pub timesteps: usize,
    pub tau: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            data: "builtin:blobs2".into(),
            samples: 400,
            hidden: vec![16],
            timesteps: 8,
            tau: 2.0,
            lr: 0.05,
            epochs: 50,
            batch: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvertConfig {
    /// Trained ANN container; when absent an MLP is trained on `data`.
    pub ann: Option<PathBuf>,
    pub data: String,
    pub samples: usize,
    /// Held-out set; for built-in data the default draws `test_samples` with seed + 1.
    pub test_data: Option<String>,
    pub test_samples: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub timesteps: Vec<usize>,
    pub tau: f64,
    pub percentile: f64,
    pub calib_fraction: f64,
    pub calib_shuffle: bool,
}

impl Default for ConvertConfig {
    fn default() -> Self {
        Self {
            ann: None,
            data: "builtin:swirl3".into(),
            samples: 10_000,
            test_data: None,
            test_samples: 2000,
            hidden: vec![64, 64],
            epochs: 30,
            lr: 0.1,
            batch: 32,
            timesteps: vec![1, 2, 4, 6, 8],
            tau: 2.0,
            percentile: 99.9,
            calib_fraction: 0.1,
            calib_shuffle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub model: Option<PathBuf>,
    pub data: String,
    pub samples: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            model: None,
            data: "builtin:swirl3".into(),
            samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Converted SpikePack container; the built-in toy conversion when absent.
    pub model: Option<PathBuf>,
    pub data: String,
    pub samples: usize,
    pub kind: SimKind,
    pub lif_timesteps: usize,
    pub lif_leak: f64,
    pub sparsity: Vec<f64>,
    /// Packed spike stream to replay into layer `layer` instead of running the network.
    pub trace: Option<PathBuf>,
    pub layer: usize,
    pub hardware: SimConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: None,
            data: "builtin:swirl3".into(),
            samples: 200,
            kind: SimKind::Both,
            lif_timesteps: 16,
            lif_leak: 1.01,
            sparsity: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            trace: None,
            layer: 1,
            hardware: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Directory holding earlier run outputs; the output directory when absent.
    pub dir: Option<PathBuf>,
}
