//! Direct training of a dense SpikePack network.

use std::path::Path;

use serde::Serialize;
use spikepack_core::container::{save_model, Model};
use spikepack_core::training::{init_dense_network, quantized_accuracy, train_toy, TrainHyper};

use super::{load_data, write_table};
use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
struct Summary {
    samples: usize,
    timesteps: usize,
    tau: f64,
    epochs: usize,
    initial_loss: f64,
    final_loss: f64,
    final_accuracy: f64,
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let c = &cfg.train;
    let data = load_data(&c.data, c.samples, cfg.seed)?;
    let mut sizes = vec![data.feature_len()];
    sizes.extend(&c.hidden);
    sizes.push(data.classes.max(2));
    let net = init_dense_network(&sizes, c.timesteps, c.tau, cfg.seed)?;
    let hyper = TrainHyper {
        lr: c.lr,
        epochs: c.epochs,
        batch: c.batch,
        seed: cfg.seed,
    };
    let outcome = train_toy(&net, &data, &hyper)?;
    write_table(out, "loss_curve", &outcome.curve, cfg.format)?;
    save_model(&out.join("snn.spkn"), &Model::Snn(outcome.net.clone()))?;
    let summary = Summary {
        samples: data.len(),
        timesteps: c.timesteps,
        tau: c.tau,
        epochs: c.epochs,
        initial_loss: outcome.curve.first().map_or(f64::NAN, |r| r.loss),
        final_loss: outcome.curve.last().map_or(f64::NAN, |r| r.loss),
        final_accuracy: quantized_accuracy(&outcome.net, &data)?,
    };
    println!(
        "trained {} epochs: loss {:.4} -> {:.4}, accuracy {:.4}",
        summary.epochs, summary.initial_loss, summary.final_loss, summary.final_accuracy
    );
    write_table(out, "train_summary", &[summary], cfg.format)?;
    Ok(())
}
