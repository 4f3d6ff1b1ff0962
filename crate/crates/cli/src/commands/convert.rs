//! ANN to SpikePack conversion over a list of window lengths.

use std::path::Path;

use serde::Serialize;
use spikepack_core::container::{load_model, save_model, Model};
use spikepack_core::converter::{ann_accuracy, calibrate, convert};

use super::metrics::evaluate_snn;
use super::{load_data, load_test_data, train_toy_ann, write_json, write_table};
use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
struct ConversionRow {
    #[serde(rename = "T")]
    timesteps: usize,
    ann_accuracy: f64,
    snn_accuracy: f64,
    gap: f64,
    overflow_fraction: f64,
    flagged_channels: usize,
    mean_firing_rate: f64,
    sop: f64,
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let c = &cfg.convert;
    if c.timesteps.is_empty() {
        return Err(CliError::Usage("at least one window length is required".into()));
    }
    if !(c.percentile > 0.0 && c.percentile <= 100.0) {
        return Err(CliError::Usage("--percentile must lie in (0, 100]".into()));
    }
    if !(c.calib_fraction > 0.0 && c.calib_fraction <= 1.0) {
        return Err(CliError::Usage("--calib-fraction must lie in (0, 1]".into()));
    }
    let train = load_data(&c.data, c.samples, cfg.seed)?;
    let test = load_test_data(&c.data, c.test_data.as_deref(), c.test_samples, cfg.seed)?;
    let ann = match &c.ann {
        Some(path) => match load_model(path)? {
            Model::Ann(m) => m,
            Model::Snn(_) => return Err(CliError::Usage(format!("{}: expected an ANN model", path.display()))),
        },
        None => train_toy_ann(c, &train, cfg.seed)?,
    };
    if ann.input_len() != test.feature_len() {
        return Err(CliError::Usage(format!(
            "model expects {} features, data has {}",
            ann.input_len(),
            test.feature_len()
        )));
    }
    save_model(&out.join("ann.spkn"), &Model::Ann(ann.clone()))?;
    let ann_acc = ann_accuracy(&ann, &test)?;
    let calib = train.calibration_split(c.calib_fraction, c.calib_shuffle.then_some(cfg.seed));

    let mut rows = Vec::with_capacity(c.timesteps.len());
    for &t in &c.timesteps {
        let report = calibrate(&ann, &calib.features, t, c.tau, c.percentile)?;
        let snn = convert(&ann, &report, t, c.tau)?;
        save_model(&out.join(format!("snn_T{t}.spkn")), &Model::Snn(snn.clone()))?;
        write_json(&out.join(format!("calibration_T{t}.json")), &report)?;
        let eval = evaluate_snn(&snn, &test)?;
        if report.flagged_channels() > 0 {
            eprintln!("warning: T={t}: {} dead channel(s) used the fallback threshold", report.flagged_channels());
        }
        println!(
            "T={t:>2}: ANN {ann_acc:.4}  SNN {:.4}  overflow {:.5}",
            eval.accuracy, report.overflow_fraction
        );
        rows.push(ConversionRow {
            timesteps: t,
            ann_accuracy: ann_acc,
            snn_accuracy: eval.accuracy,
            gap: ann_acc - eval.accuracy,
            overflow_fraction: report.overflow_fraction,
            flagged_channels: report.flagged_channels(),
            mean_firing_rate: eval.mean_firing_rate,
            sop: eval.sop,
        });
    }
    write_table(out, "conversion", &rows, cfg.format)?;
    Ok(())
}
