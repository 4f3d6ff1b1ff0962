//! Accuracy and activity statistics shared by `convert` and `infer`.

use spikepack_core::dataset::Dataset;
use spikepack_core::info_metrics::sop;
use spikepack_core::network::{network_forward_batch, NetworkSpec};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct SnnEval {
    pub accuracy: f64,
    /// Mean firing rate of each hidden layer over the dataset.
    pub layer_rates: Vec<f64>,
    pub mean_firing_rate: f64,
    /// Mean synaptic operations per sample driven by hidden-layer spikes.
    pub sop: f64,
    pub predictions: Vec<usize>,
}

/// Dense multiply-accumulate count of a layer.
pub fn layer_macs(net: &NetworkSpec, l: usize) -> f64 {
    let shape = &net.layers[l].shape;
    (0..shape.input_len()).map(|j| shape.fan_out(j) as f64).sum()
}

pub fn evaluate_snn(net: &NetworkSpec, data: &Dataset) -> Result<SnnEval, CliError> {
    let outs = network_forward_batch(&data.features, net)?;
    let hidden = net.layers.len() - 1;
    let mut rates = vec![0.0; hidden];
    let mut correct = 0usize;
    let mut predictions = Vec::with_capacity(outs.len());
    for (o, &y) in outs.iter().zip(&data.labels) {
        let p = o.predicted_class();
        correct += usize::from(p == y);
        predictions.push(p);
        for (r, tr) in rates.iter_mut().zip(&o.trace) {
            *r += tr.firing_rate;
        }
    }
    let n = outs.len().max(1) as f64;
    for r in &mut rates {
        *r /= n;
    }
    let mut total_sop = 0.0;
    for (l, &fr) in rates.iter().enumerate() {
        total_sop += sop(fr.clamp(0.0, 1.0), layer_macs(net, l + 1), net.timesteps)?;
    }
    let mean_firing_rate = if hidden == 0 { 0.0 } else { rates.iter().sum::<f64>() / hidden as f64 };
    Ok(SnnEval {
        accuracy: correct as f64 / n,
        layer_rates: rates,
        mean_firing_rate,
        sop: total_sop,
        predictions,
    })
}
