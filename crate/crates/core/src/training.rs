//! Direct training through the packed quantizer with a straight-through
//! gradient: the quantizer's Jacobian is taken as `1/θ` per channel.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::network::{argmax, layer_forward, presynaptic_values, LayerInput, LayerShape, LayerSpec, NetworkSpec};
use crate::spike_tensor::evaluate;

/// How hidden layers turn `v_g` into the next layer's pre-synaptic values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Packed quantizer, then `evaluate`.
    Quantized,
    /// `v_g / θ` with no rounding or clamping.
    Relaxed,
}

/// Values cached by a forward pass for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTape {
    /// Per layer: pre-synaptic values before `input_scale` (raw input for layer 0).
    pub presynaptic: Vec<Vec<f64>>,
    /// Per layer: membrane potential `v_g`.
    pub potentials: Vec<Vec<f64>>,
}

impl GradTape {
    pub fn logits(&self) -> &[f64] {
        self.potentials.last().map_or(&[], Vec::as_slice)
    }

    fn check(&self, net: &NetworkSpec) -> Result<()> {
        let n = net.layers.len();
        if self.presynaptic.len() != n || self.potentials.len() != n {
            return Err(Error::Shape(format!(
                "tape holds {} layers, network has {n}",
                self.presynaptic.len()
            )));
        }
        for (l, layer) in net.layers.iter().enumerate() {
            if self.presynaptic[l].len() != layer.input_len() || self.potentials[l].len() != layer.output_len() {
                return Err(Error::Shape(format!("tape entry {l} does not match layer shape")));
            }
        }
        Ok(())
    }
}

pub fn forward_with_tape(input: &[f64], net: &NetworkSpec, mode: ForwardMode) -> Result<GradTape> {
    net.validate()?;
    let mut presynaptic = Vec::with_capacity(net.layers.len());
    let mut potentials = Vec::with_capacity(net.layers.len());
    let cfg0 = net.neuron_config(0);
    let mut values = presynaptic_values(LayerInput::Analog(input), &net.layers[0], &cfg0)?;
    for (l, layer) in net.layers.iter().enumerate() {
        let v_g = layer.potential(&values);
        let next = if l + 1 == net.layers.len() {
            None
        } else {
            Some(match mode {
                ForwardMode::Quantized => {
                    let spikes = layer_forward(LayerInput::Analog(&values), layer, &net.neuron_config(l))?;
                    evaluate(&spikes)
                }
                ForwardMode::Relaxed => {
                    let spatial = layer.shape.out_spatial();
                    v_g.iter()
                        .enumerate()
                        .map(|(o, v)| v / layer.theta_out[o / spatial])
                        .collect()
                }
            })
        };
        presynaptic.push(values);
        potentials.push(v_g);
        match next {
            Some(v) => values = v,
            None => break,
        }
    }
    Ok(GradTape {
        presynaptic,
        potentials,
    })
}

/// Logits of the relaxed model.
pub fn relaxed_forward(input: &[f64], net: &NetworkSpec) -> Result<Vec<f64>> {
    Ok(forward_with_tape(input, net, ForwardMode::Relaxed)?.logits().to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
    /// Gradient with respect to the analog network input.
    pub input: Vec<f64>,
}

impl Gradients {
    pub fn zeros(net: &NetworkSpec) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            input: vec![0.0; net.input_len()],
        }
    }

    fn add_assign(&mut self, other: &Self) {
        let pairs = self
            .weights
            .iter_mut()
            .chain(self.bias.iter_mut())
            .chain(std::iter::once(&mut self.input))
            .zip(other.weights.iter().chain(&other.bias).chain(std::iter::once(&other.input)));
        for (a, b) in pairs {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Backward pass from `loss_grad = dL/dlogits`. Each hidden layer's gradient
/// is divided channelwise by that layer's `θ`; the readout has none.
pub fn backward(loss_grad: &[f64], tape: &GradTape, net: &NetworkSpec) -> Result<Gradients> {
    net.validate()?;
    tape.check(net)?;
    if loss_grad.len() != net.output_len() {
        return Err(Error::Shape(format!(
            "loss gradient has {} entries, network emits {}",
            loss_grad.len(),
            net.output_len()
        )));
    }
    let n = net.layers.len();
    let mut weights = vec![Vec::new(); n];
    let mut bias = vec![Vec::new(); n];
    let mut g_v = loss_grad.to_vec();
    for l in (0..n).rev() {
        let layer = &net.layers[l];
        let (gw, gb) = layer.shape.param_grads(&g_v, &layer.scale_input(&tape.presynaptic[l]));
        weights[l] = gw;
        bias[l] = gb;
        // dL/d(pre-synaptic values) = input_scale * W^T g_v
        let g_pre = layer.scale_input(&layer.shape.transpose_apply(&layer.weights, &g_v));
        if l == 0 {
            return Ok(Gradients {
                weights,
                bias,
                input: g_pre,
            });
        }
        let producer = &net.layers[l - 1];
        let spatial = producer.shape.out_spatial();
        g_v = g_pre
            .iter()
            .enumerate()
            .map(|(o, g)| g / producer.theta_out[o / spatial])
            .collect();
    }
    unreachable!("network validation guarantees at least one layer")
}

/// Softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let grad = exp
        .iter()
        .enumerate()
        .map(|(i, e)| e / sum - if i == label { 1.0 } else { 0.0 })
        .collect();
    (loss, grad)
}

/// Direct-training threshold `T / 2^T`.
pub fn direct_training_theta(timesteps: usize) -> f64 {
    timesteps as f64 / 2f64.powi(timesteps as i32)
}

/// Dense stack with uniform He-style initialisation, hidden thresholds from
/// [`direct_training_theta`] and each layer's input scale set to the
/// producer's threshold.
pub fn init_dense_network(sizes: &[usize], timesteps: usize, tau: f64, seed: u64) -> Result<NetworkSpec> {
    if sizes.len() < 2 {
        return Err(invalid("sizes", "need at least input and output width"));
    }
    let theta = direct_training_theta(timesteps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for (l, w) in sizes.windows(2).enumerate() {
        let (inputs, outputs) = (w[0], w[1]);
        let bound = (6.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect();
        let mut layer = LayerSpec::new(LayerShape::Dense { inputs, outputs }, weights, vec![0.0; outputs])?;
        if l + 2 < sizes.len() {
            layer.theta_out = vec![theta; outputs];
        }
        if l > 0 {
            layer.input_scale = vec![theta; inputs];
        }
        layers.push(layer);
    }
    NetworkSpec::new(layers, timesteps, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 50,
            batch: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the epoch's samples, measured before each update.
    pub loss: f64,
    /// Accuracy of the quantized network on the whole set after the epoch.
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: NetworkSpec,
    pub curve: Vec<EpochRecord>,
}

fn check_dataset(net: &NetworkSpec, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    if data.feature_len() != net.input_len() {
        return Err(Error::Shape(format!(
            "samples have {} features, network expects {}",
            data.feature_len(),
            net.input_len()
        )));
    }
    if let Some(&y) = data.labels.iter().find(|&&y| y >= net.output_len()) {
        return Err(Error::Dataset(format!("label {y} exceeds {} outputs", net.output_len())));
    }
    Ok(())
}

/// Minibatch SGD on softmax cross-entropy through the quantized forward pass.
/// Per-sample gradients run in parallel and are summed in sample order.
pub fn train_toy(net: &NetworkSpec, data: &Dataset, hyper: &TrainHyper) -> Result<TrainOutcome> {
    net.validate()?;
    check_dataset(net, data)?;
    if !(hyper.lr.is_finite() && hyper.lr >= 0.0) {
        return Err(invalid("lr", "must be finite and >= 0"));
    }
    if hyper.batch == 0 {
        return Err(invalid("batch", "must be >= 1"));
    }
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(hyper.batch) {
            let per_sample: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&i| {
                    let tape = forward_with_tape(&data.features[i], &net, ForwardMode::Quantized)?;
                    let (loss, grad) = softmax_cross_entropy(tape.logits(), data.labels[i]);
                    Ok((loss, backward(&grad, &tape, &net)?))
                })
                .collect::<Result<_>>()?;
            let mut total = Gradients::zeros(&net);
            for (loss, g) in &per_sample {
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, loss: *loss });
                }
                loss_sum += loss;
                total.add_assign(g);
            }
            let step = hyper.lr / batch.len() as f64;
            for (layer, (gw, gb)) in net.layers.iter_mut().zip(total.weights.iter().zip(&total.bias)) {
                for (w, g) in layer.weights.iter_mut().zip(gw) {
                    *w -= step * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(gb) {
                    *b -= step * g;
                }
            }
            let finite = net
                .layers
                .iter()
                .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()));
            if !finite {
                return Err(Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                });
            }
        }
        let loss = loss_sum / data.len() as f64;
        if !loss.is_finite() || net.validate().is_err() {
            return Err(Error::Diverged { epoch, loss });
        }
        curve.push(EpochRecord {
            epoch,
            loss,
            accuracy: quantized_accuracy(&net, data)?,
        });
    }
    Ok(TrainOutcome { net, curve })
}

pub fn quantized_accuracy(net: &NetworkSpec, data: &Dataset) -> Result<f64> {
    let hits = data
        .features
        .par_iter()
        .zip(&data.labels)
        .map(|(x, &y)| Ok(usize::from(argmax(forward_with_tape(x, net, ForwardMode::Quantized)?.logits()) == y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / data.len() as f64)
}

pub fn write_curve_csv<W: Write>(out: W, curve: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "loss", "accuracy"])?;
    for r in curve {
        w.write_record([r.epoch.to_string(), r.loss.to_string(), r.accuracy.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_curve_csv(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    write_curve_csv(std::fs::File::create(path)?, curve)
}
