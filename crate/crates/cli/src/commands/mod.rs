//! One module per subcommand plus shared I/O helpers.

use std::path::{Path, PathBuf};

use serde::Serialize;
use spikepack_core::converter::{train_ann, AnnModel};
use spikepack_core::dataset::{self, Dataset};
use spikepack_core::training::TrainHyper;

use crate::config::{ConvertConfig, ReportFormat};
use crate::CliError;

pub mod convert;
pub mod equiv;
pub mod infer;
pub mod metrics;
pub mod mi;
pub mod report;
pub mod simulate;
pub mod train;

/// Writes rows as `<name>.csv` or `<name>.json` and returns the path.
pub fn write_table<T: Serialize>(out: &Path, name: &str, rows: &[T], format: ReportFormat) -> Result<PathBuf, CliError> {
    let path = match format {
        ReportFormat::Csv => {
            let path = out.join(format!("{name}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(e.to_string()))?;
            for r in rows {
                w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.flush()?;
            path
        }
        ReportFormat::Json => {
            let path = out.join(format!("{name}.json"));
            let text = serde_json::to_string_pretty(rows).map_err(|e| CliError::Io(e.to_string()))?;
            std::fs::write(&path, text + "\n")?;
            path
        }
    };
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// `builtin:<name>` draws `samples` points with `seed`; otherwise a CSV file
/// (by extension) or a raw image file with a `.shape` sidecar.
pub fn load_data(spec: &str, samples: usize, seed: u64) -> Result<Dataset, CliError> {
    let data = if let Some(name) = spec.strip_prefix("builtin:") {
        if samples == 0 {
            return Err(CliError::Usage("sample count must be >= 1".into()));
        }
        dataset::builtin(name, samples, seed).map_err(|e| CliError::Usage(e.to_string()))?
    } else {
        let path = Path::new(spec);
        if !path.exists() {
            return Err(CliError::Io(format!("{spec}: no such file")));
        }
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            dataset::load_csv(path)?
        } else {
            dataset::load_raw_images(path)?
        }
    };
    if data.is_empty() {
        return Err(CliError::Io(format!("{spec}: dataset is empty")));
    }
    Ok(data)
}

/// Held-out data: the explicit spec, a fresh draw for built-in sets, or the
/// training file itself.
pub fn load_test_data(train_spec: &str, test_spec: Option<&str>, samples: usize, seed: u64) -> Result<Dataset, CliError> {
    match test_spec {
        Some(spec) => load_data(spec, samples, seed.wrapping_add(1)),
        None => load_data(train_spec, samples, seed.wrapping_add(1)),
    }
}

/// Trains the ReLU MLP described by `cfg` on its training data.
pub fn train_toy_ann(cfg: &ConvertConfig, train: &Dataset, seed: u64) -> Result<AnnModel, CliError> {
    let mut sizes = vec![train.feature_len()];
    sizes.extend(&cfg.hidden);
    sizes.push(train.classes.max(2));
    let init = AnnModel::mlp(&sizes, seed)?;
    let hyper = TrainHyper {
        lr: cfg.lr,
        epochs: cfg.epochs,
        batch: cfg.batch,
        seed,
    };
    Ok(train_ann(&init, train, &hyper)?.0)
}
