//! Batch inference with a saved model.

use std::path::Path;

use serde::Serialize;
use spikepack_core::container::{load_model, Model};
use spikepack_core::converter::ann_forward;
use spikepack_core::network::argmax;

use super::metrics::evaluate_snn;
use super::{load_data, write_table};
use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
struct InferRow {
    model: &'static str,
    #[serde(rename = "T")]
    timesteps: usize,
    samples: usize,
    accuracy: f64,
    mean_firing_rate: f64,
    sop: f64,
}

#[derive(Debug, Serialize)]
struct Prediction {
    index: usize,
    label: usize,
    predicted: usize,
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let c = &cfg.infer;
    let path = c.model.as_ref().ok_or_else(|| CliError::Usage("--model is required".into()))?;
    if !path.exists() {
        return Err(CliError::Io(format!("{}: no such file", path.display())));
    }
    let model = load_model(path)?;
    let data = load_data(&c.data, c.samples, cfg.seed)?;
    let (row, predicted) = match &model {
        Model::Snn(net) => {
            if net.input_len() != data.feature_len() {
                return Err(CliError::Usage(format!(
                    "model expects {} features, data has {}",
                    net.input_len(),
                    data.feature_len()
                )));
            }
            let eval = evaluate_snn(net, &data)?;
            let row = InferRow {
                model: "snn",
                timesteps: net.timesteps,
                samples: data.len(),
                accuracy: eval.accuracy,
                mean_firing_rate: eval.mean_firing_rate,
                sop: eval.sop,
            };
            (row, eval.predictions)
        }
        Model::Ann(ann) => {
            if ann.input_len() != data.feature_len() {
                return Err(CliError::Usage(format!(
                    "model expects {} features, data has {}",
                    ann.input_len(),
                    data.feature_len()
                )));
            }
            let mut predicted = Vec::with_capacity(data.len());
            for x in &data.features {
                predicted.push(argmax(&ann_forward(ann, x)?));
            }
            let correct = predicted.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
            let row = InferRow {
                model: "ann",
                timesteps: 0,
                samples: data.len(),
                accuracy: correct as f64 / data.len() as f64,
                mean_firing_rate: 0.0,
                sop: 0.0,
            };
            (row, predicted)
        }
    };
    println!("{} accuracy {:.4} on {} samples", row.model, row.accuracy, row.samples);
    let preds: Vec<Prediction> = predicted
        .iter()
        .zip(&data.labels)
        .enumerate()
        .map(|(index, (&predicted, &label))| Prediction { index, label, predicted })
        .collect();
    write_table(out, "infer", &[row], cfg.format)?;
    write_table(out, "predictions", &preds, cfg.format)?;
    Ok(())
}
