//! ReLU ANN description, a small SGD trainer for it, per-channel threshold
//! calibration and conversion into a [`NetworkSpec`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::network::{argmax, Conv2dGeometry, LayerShape, LayerSpec, NetworkSpec};
use crate::spike_tensor::{check_tau, check_timesteps, TemporalWeights, MAX_TIMESTEPS};
use crate::training::{softmax_cross_entropy, EpochRecord, TrainHyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AnnLayer {
    Affine {
        shape: LayerShape,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    },
    /// Inference-mode batch norm over `channels`, each spanning `spatial` values.
    BatchNorm {
        channels: usize,
        spatial: usize,
        gamma: Vec<f64>,
        beta: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
        eps: f64,
        activation: Activation,
    },
    /// Square average pooling without padding.
    AvgPool {
        channels: usize,
        in_height: usize,
        in_width: usize,
        kernel: usize,
        stride: usize,
    },
}

impl AnnLayer {
    fn pool_out(in_len: usize, kernel: usize, stride: usize) -> usize {
        (in_len - kernel) / stride + 1
    }

    pub fn input_len(&self) -> usize {
        match self {
            AnnLayer::Affine { shape, .. } => shape.input_len(),
            AnnLayer::BatchNorm { channels, spatial, .. } => channels * spatial,
            AnnLayer::AvgPool {
                channels,
                in_height,
                in_width,
                ..
            } => channels * in_height * in_width,
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            AnnLayer::Affine { shape, .. } => shape.output_len(),
            AnnLayer::BatchNorm { channels, spatial, .. } => channels * spatial,
            AnnLayer::AvgPool {
                channels,
                in_height,
                in_width,
                kernel,
                stride,
            } => channels * Self::pool_out(*in_height, *kernel, *stride) * Self::pool_out(*in_width, *kernel, *stride),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            AnnLayer::Affine {
                shape, weights, bias, ..
            } => {
                shape.validate()?;
                if weights.len() != shape.weight_len() || bias.len() != shape.out_channels() {
                    return Err(Error::Shape("affine parameter sizes do not match shape".into()));
                }
                if !weights.iter().chain(bias).all(|v| v.is_finite()) {
                    return Err(Error::NonFinite("ANN weights"));
                }
            }
            AnnLayer::BatchNorm {
                channels,
                gamma,
                beta,
                mean,
                var,
                eps,
                ..
            } => {
                if [gamma, beta, mean, var].iter().any(|v| v.len() != *channels) {
                    return Err(Error::Shape("batch-norm vectors must have one entry per channel".into()));
                }
                if !var.iter().all(|v| v + eps > 0.0) {
                    return Err(Error::Domain("batch-norm variance + eps must be > 0".into()));
                }
            }
            AnnLayer::AvgPool {
                channels,
                in_height,
                in_width,
                kernel,
                stride,
            } => {
                if *channels == 0 || *kernel == 0 || *stride == 0 || kernel > in_height || kernel > in_width {
                    return Err(Error::Shape("invalid average-pool geometry".into()));
                }
            }
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        match self {
            AnnLayer::Affine {
                shape,
                weights,
                bias,
                activation,
            } => shape
                .affine(weights, bias, x)
                .into_iter()
                .map(|v| activation.apply(v))
                .collect(),
            AnnLayer::BatchNorm {
                spatial,
                gamma,
                beta,
                mean,
                var,
                eps,
                activation,
                ..
            } => x
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let c = i / spatial;
                    activation.apply(gamma[c] * (v - mean[c]) / (var[c] + eps).sqrt() + beta[c])
                })
                .collect(),
            AnnLayer::AvgPool {
                channels,
                in_height,
                in_width,
                kernel,
                stride,
            } => {
                let oh = Self::pool_out(*in_height, *kernel, *stride);
                let ow = Self::pool_out(*in_width, *kernel, *stride);
                let mut out = Vec::with_capacity(channels * oh * ow);
                for c in 0..*channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut sum = 0.0;
                            for ky in 0..*kernel {
                                for kx in 0..*kernel {
                                    let (y, xx) = (oy * stride + ky, ox * stride + kx);
                                    sum += x[(c * in_height + y) * in_width + xx];
                                }
                            }
                            out.push(sum / (kernel * kernel) as f64);
                        }
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnModel {
    pub layers: Vec<AnnLayer>,
}

impl AnnModel {
    pub fn new(layers: Vec<AnnLayer>) -> Result<Self> {
        let model = Self { layers };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("model has no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate().map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output_len() != pair[1].input_len() {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} values, layer {} expects {}",
                    pair[0].output_len(),
                    i + 1,
                    pair[1].input_len()
                )));
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().map_or(0, AnnLayer::input_len)
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, AnnLayer::output_len)
    }

    /// Dense ReLU MLP with an identity readout and uniform He initialisation.
    pub fn mlp(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid("sizes", "need at least two nonzero widths"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let bound = (6.0 / w[0] as f64).sqrt();
                AnnLayer::Affine {
                    shape: LayerShape::Dense {
                        inputs: w[0],
                        outputs: w[1],
                    },
                    weights: (0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)).collect(),
                    bias: vec![0.0; w[1]],
                    activation: if l + 2 < sizes.len() {
                        Activation::Relu
                    } else {
                        Activation::Identity
                    },
                }
            })
            .collect();
        Self::new(layers)
    }
}

pub fn ann_forward(model: &AnnModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.input_len() {
        return Err(Error::Shape(format!(
            "model expects {} inputs, got {}",
            model.input_len(),
            x.len()
        )));
    }
    Ok(model.layers.iter().fold(x.to_vec(), |acc, layer| layer.forward(&acc)))
}

pub fn ann_accuracy(model: &AnnModel, data: &Dataset) -> Result<f64> {
    let hits = data
        .features
        .par_iter()
        .zip(&data.labels)
        .map(|(x, &y)| Ok(usize::from(argmax(&ann_forward(model, x)?) == y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / data.len().max(1) as f64)
}

/// Minibatch SGD with softmax cross-entropy for models made of affine layers
/// with ReLU or identity activations.
pub fn train_ann(model: &AnnModel, data: &Dataset, hyper: &TrainHyper) -> Result<(AnnModel, Vec<EpochRecord>)> {
    model.validate()?;
    if data.is_empty() || data.feature_len() != model.input_len() {
        return Err(Error::Dataset("training set is empty or does not match the model input".into()));
    }
    if hyper.batch == 0 || !(hyper.lr.is_finite() && hyper.lr >= 0.0) {
        return Err(invalid("hyper", "batch must be >= 1 and lr finite and >= 0"));
    }
    for layer in &model.layers {
        match layer {
            AnnLayer::Affine {
                activation: Activation::Relu | Activation::Identity,
                ..
            } => {}
            _ => return Err(Error::UnsupportedLayer("trainer handles ReLU/identity affine layers only".into())),
        }
    }
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(hyper.batch) {
            let grads: Vec<(f64, LayerGrads)> = batch
                .par_iter()
                .map(|&i| sample_grads(&model, &data.features[i], data.labels[i]))
                .collect();
            let mut total: Vec<(Vec<f64>, Vec<f64>)> = model
                .layers
                .iter()
                .map(|l| match l {
                    AnnLayer::Affine { weights, bias, .. } => (vec![0.0; weights.len()], vec![0.0; bias.len()]),
                    _ => unreachable!(),
                })
                .collect();
            for (loss, g) in &grads {
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, loss: *loss });
                }
                loss_sum += loss;
                for ((tw, tb), (gw, gb)) in total.iter_mut().zip(g) {
                    tw.iter_mut().zip(gw).for_each(|(a, b)| *a += b);
                    tb.iter_mut().zip(gb).for_each(|(a, b)| *a += b);
                }
            }
            let step = hyper.lr / batch.len() as f64;
            for (layer, (gw, gb)) in model.layers.iter_mut().zip(&total) {
                if let AnnLayer::Affine { weights, bias, .. } = layer {
                    weights.iter_mut().zip(gw).for_each(|(w, g)| *w -= step * g);
                    bias.iter_mut().zip(gb).for_each(|(b, g)| *b -= step * g);
                }
            }
        }
        let loss = loss_sum / data.len() as f64;
        if !loss.is_finite() || model.validate().is_err() {
            return Err(Error::Diverged { epoch, loss });
        }
        curve.push(EpochRecord {
            epoch,
            loss,
            accuracy: ann_accuracy(&model, data)?,
        });
    }
    Ok((model, curve))
}

/// Per-layer `(weight, bias)` gradients.
type LayerGrads = Vec<(Vec<f64>, Vec<f64>)>;

fn sample_grads(model: &AnnModel, x: &[f64], y: usize) -> (f64, LayerGrads) {
    let mut inputs = Vec::with_capacity(model.layers.len());
    let mut pre = Vec::with_capacity(model.layers.len());
    let mut a = x.to_vec();
    for layer in &model.layers {
        let AnnLayer::Affine {
            shape,
            weights,
            bias,
            activation,
        } = layer
        else {
            unreachable!()
        };
        let z = shape.affine(weights, bias, &a);
        inputs.push(a);
        a = z.iter().map(|v| activation.apply(*v)).collect();
        pre.push(z);
    }
    let (loss, mut g) = softmax_cross_entropy(&a, y);
    let mut out = vec![(Vec::new(), Vec::new()); model.layers.len()];
    for l in (0..model.layers.len()).rev() {
        let AnnLayer::Affine {
            shape,
            weights,
            activation,
            ..
        } = &model.layers[l]
        else {
            unreachable!()
        };
        if *activation == Activation::Relu {
            for (gi, z) in g.iter_mut().zip(&pre[l]) {
                if *z <= 0.0 {
                    *gi = 0.0;
                }
            }
        }
        out[l] = shape.param_grads(&g, &inputs[l]);
        if l > 0 {
            g = shape.transpose_apply(weights, &g);
        }
    }
    (loss, out)
}

/// An affine stage after folding batch norm and pooling; `relu` marks hidden
/// stages whose output is non-negative and gets quantized.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedLayer {
    pub shape: LayerShape,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub relu: bool,
}

impl FoldedLayer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let z = self.shape.affine(&self.weights, &self.bias, x);
        if self.relu {
            z.into_iter().map(|v| v.max(0.0)).collect()
        } else {
            z
        }
    }
}

/// Folds batch norm into the preceding affine layer and turns average pooling
/// into a convolution. Hidden stages must end in ReLU, the readout must not.
pub fn fold(model: &AnnModel) -> Result<Vec<FoldedLayer>> {
    model.validate()?;
    let mut stages: Vec<FoldedLayer> = Vec::new();
    let activation_relu = |a: Activation, what: &str| match a {
        Activation::Relu => Ok(true),
        Activation::Identity => Ok(false),
        other => Err(Error::UnsupportedLayer(format!("{what} with {other:?} activation"))),
    };
    for (i, layer) in model.layers.iter().enumerate() {
        match layer {
            AnnLayer::Affine {
                shape,
                weights,
                bias,
                activation,
            } => {
                if stages.last().is_some_and(|s| !s.relu) {
                    return Err(Error::UnsupportedLayer(format!(
                        "layer {i}: affine layer follows a non-ReLU hidden layer"
                    )));
                }
                stages.push(FoldedLayer {
                    shape: *shape,
                    weights: weights.clone(),
                    bias: bias.clone(),
                    relu: activation_relu(*activation, "affine layer")?,
                });
            }
            AnnLayer::BatchNorm {
                channels,
                gamma,
                beta,
                mean,
                var,
                eps,
                activation,
                ..
            } => {
                let Some(prev) = stages.last_mut().filter(|s| !s.relu) else {
                    return Err(Error::UnsupportedLayer(format!(
                        "layer {i}: batch norm must directly follow an affine layer without activation"
                    )));
                };
                if prev.shape.out_channels() != *channels {
                    return Err(Error::Shape(format!("layer {i}: batch-norm channel count mismatch")));
                }
                let per_out = prev.shape.weight_len() / channels;
                for c in 0..*channels {
                    let s = gamma[c] / (var[c] + eps).sqrt();
                    for w in &mut prev.weights[c * per_out..(c + 1) * per_out] {
                        *w *= s;
                    }
                    prev.bias[c] = (prev.bias[c] - mean[c]) * s + beta[c];
                }
                prev.relu = activation_relu(*activation, "batch norm")?;
            }
            AnnLayer::AvgPool {
                channels,
                in_height,
                in_width,
                kernel,
                stride,
            } => {
                if !stages.last().is_some_and(|s| s.relu) {
                    return Err(Error::UnsupportedLayer(format!(
                        "layer {i}: average pooling must follow a ReLU layer"
                    )));
                }
                let geom = Conv2dGeometry {
                    in_channels: *channels,
                    in_height: *in_height,
                    in_width: *in_width,
                    out_channels: *channels,
                    kernel_h: *kernel,
                    kernel_w: *kernel,
                    stride: *stride,
                    padding: 0,
                };
                let k2 = kernel * kernel;
                let mut weights = vec![0.0; channels * channels * k2];
                for c in 0..*channels {
                    let base = (c * channels + c) * k2;
                    weights[base..base + k2].fill(1.0 / k2 as f64);
                }
                stages.push(FoldedLayer {
                    shape: LayerShape::Conv2d(geom),
                    weights,
                    bias: vec![0.0; *channels],
                    relu: true,
                });
            }
        }
    }
    if stages.last().is_some_and(|s| s.relu) {
        return Err(Error::UnsupportedLayer("readout layer must not have an activation".into()));
    }
    Ok(stages)
}

/// Post-activation outputs of every folded stage.
pub fn stage_activations(stages: &[FoldedLayer], x: &[f64]) -> Vec<Vec<f64>> {
    let mut outs: Vec<Vec<f64>> = Vec::with_capacity(stages.len());
    for s in stages {
        let input = outs.last().map_or(x, Vec::as_slice);
        let next = s.forward(input);
        outs.push(next);
    }
    outs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCalibration {
    pub observed_max: f64,
    pub percentile_value: f64,
    pub theta: f64,
    /// Share of this channel's calibration activations above the full scale.
    pub overflow_fraction: f64,
    /// The percentile was zero and a layer-level fallback threshold was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCalibration {
    pub channels: Vec<ChannelCalibration>,
    pub overflow_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub timesteps: usize,
    pub tau: f64,
    pub percentile: f64,
    pub samples: usize,
    /// One entry per hidden (quantized) stage.
    pub layers: Vec<LayerCalibration>,
    pub overflow_fraction: f64,
}

impl CalibrationReport {
    pub fn thetas(&self, layer: usize) -> Vec<f64> {
        self.layers[layer].channels.iter().map(|c| c.theta).collect()
    }

    pub fn flagged_channels(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.channels).filter(|c| c.fallback).count()
    }
}

/// Linear-interpolation percentile of sorted data, `p` in percent.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub const DEFAULT_PERCENTILE: f64 = 99.9;

/// Per-channel thresholds: the channel's activation percentile divided by the
/// full-scale word value `Σ τ^(T-t)`.
pub fn calibrate(
    model: &AnnModel,
    calib: &[Vec<f64>],
    timesteps: usize,
    tau: f64,
    percentile: f64,
) -> Result<CalibrationReport> {
    check_tau(tau)?;
    check_timesteps(timesteps, MAX_TIMESTEPS)?;
    if calib.is_empty() {
        return Err(Error::Dataset("calibration set is empty".into()));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(invalid("percentile", "must lie in (0, 100]"));
    }
    let stages = fold(model)?;
    if let Some(bad) = calib.iter().find(|x| x.len() != model.input_len()) {
        return Err(Error::Shape(format!(
            "calibration sample has {} values, model expects {}",
            bad.len(),
            model.input_len()
        )));
    }
    let full_scale = TemporalWeights::new(tau, timesteps)?.sum();
    let acts: Vec<Vec<Vec<f64>>> = calib.par_iter().map(|x| stage_activations(&stages, x)).collect();
    let hidden = stages.len() - 1;
    let mut layers = Vec::with_capacity(hidden);
    let (mut over_all, mut count_all) = (0usize, 0usize);
    for (l, stage) in stages.iter().take(hidden).enumerate() {
        let channels = stage.shape.out_channels();
        let spatial = stage.shape.out_spatial();
        let mut per_channel: Vec<Vec<f64>> = vec![Vec::with_capacity(calib.len() * spatial); channels];
        for sample in &acts {
            for (o, &a) in sample[l].iter().enumerate() {
                per_channel[o / spatial].push(a);
            }
        }
        for values in &mut per_channel {
            values.sort_by(f64::total_cmp);
        }
        let smallest_positive = per_channel
            .iter()
            .flat_map(|v| v.iter().copied().find(|&a| a > 0.0))
            .fold(f64::INFINITY, f64::min);
        let fallback_value = if smallest_positive.is_finite() { smallest_positive } else { 1.0 };
        let (mut over_layer, mut count_layer) = (0usize, 0usize);
        let channels: Vec<ChannelCalibration> = per_channel
            .iter()
            .map(|values| {
                let observed_max = values.last().copied().unwrap_or(0.0);
                let percentile_value = percentile_sorted(values, percentile);
                let fallback = percentile_value <= 0.0;
                let theta = if fallback { fallback_value } else { percentile_value / full_scale };
                let limit = theta * full_scale;
                let over = values.iter().filter(|&&a| a > limit).count();
                over_layer += over;
                count_layer += values.len();
                ChannelCalibration {
                    observed_max,
                    percentile_value,
                    theta,
                    overflow_fraction: over as f64 / values.len().max(1) as f64,
                    fallback,
                }
            })
            .collect();
        over_all += over_layer;
        count_all += count_layer;
        layers.push(LayerCalibration {
            channels,
            overflow_fraction: over_layer as f64 / count_layer.max(1) as f64,
        });
    }
    Ok(CalibrationReport {
        timesteps,
        tau,
        percentile,
        samples: calib.len(),
        layers,
        overflow_fraction: over_all as f64 / count_all.max(1) as f64,
    })
}

fn check_report(stages: &[FoldedLayer], report: &CalibrationReport, timesteps: usize, tau: f64) -> Result<()> {
    if report.timesteps != timesteps || report.tau != tau {
        return Err(Error::Shape(format!(
            "report was calibrated for (T={}, tau={}), conversion asks for (T={timesteps}, tau={tau})",
            report.timesteps, report.tau
        )));
    }
    if report.layers.len() + 1 != stages.len() {
        return Err(Error::Shape(format!(
            "report covers {} hidden layers, model has {}",
            report.layers.len(),
            stages.len() - 1
        )));
    }
    for (l, (stage, cal)) in stages.iter().zip(&report.layers).enumerate() {
        if stage.shape.out_channels() != cal.channels.len() {
            return Err(Error::Shape(format!("report layer {l} channel count mismatch")));
        }
        if !cal.channels.iter().all(|c| c.theta.is_finite() && c.theta > 0.0) {
            return Err(Error::Domain(format!("report layer {l} has a non-positive threshold")));
        }
    }
    Ok(())
}

fn assemble(stages: Vec<FoldedLayer>, thetas: &[Vec<f64>], timesteps: usize, tau: f64) -> Result<NetworkSpec> {
    let n = stages.len();
    let mut layers = Vec::with_capacity(n);
    for (l, stage) in stages.into_iter().enumerate() {
        let mut spec = LayerSpec::new(stage.shape, stage.weights, stage.bias)?;
        if l + 1 < n {
            spec.theta_out = thetas[l].clone();
        }
        if l > 0 {
            spec.input_scale = in_channel_scale(&spec.shape, &thetas[l - 1]);
        }
        layers.push(spec);
    }
    NetworkSpec::new(layers, timesteps, tau)
}

/// Maps the producer's per-channel values onto the consumer's input channels.
/// A dense consumer sees every producer neuron as its own channel.
fn in_channel_scale(consumer: &LayerShape, producer_channels: &[f64]) -> Vec<f64> {
    let n = consumer.in_channels();
    if n == producer_channels.len() {
        producer_channels.to_vec()
    } else {
        let per = n / producer_channels.len();
        (0..n).map(|i| producer_channels[i / per]).collect()
    }
}

/// Replaces each hidden ReLU with a SpikePack quantizer using the calibrated
/// thresholds and folds each threshold into the consumer's input scale.
pub fn convert(model: &AnnModel, report: &CalibrationReport, timesteps: usize, tau: f64) -> Result<NetworkSpec> {
    let stages = fold(model)?;
    check_report(&stages, report, timesteps, tau)?;
    let thetas: Vec<Vec<f64>> = (0..report.layers.len()).map(|l| report.thetas(l)).collect();
    assemble(stages, &thetas, timesteps, tau)
}

/// Rate-coded LIF counterpart of [`convert`]: each hidden channel fires at
/// threshold `θ·Σq` (its calibrated activation ceiling), so a spike carries that
/// much activation and the readout averages over the window.
pub fn convert_lif(model: &AnnModel, report: &CalibrationReport, timesteps: usize, leak_tau: f64) -> Result<NetworkSpec> {
    spikepack_to_lif(&convert(model, report, report.timesteps, report.tau)?, timesteps, leak_tau)
}

/// Same weights as a converted SpikePack network, with every threshold and
/// input scale multiplied by the full-scale word value, run as LIF neurons
/// with leak `leak_tau` over `timesteps` steps.
pub fn spikepack_to_lif(net: &NetworkSpec, timesteps: usize, leak_tau: f64) -> Result<NetworkSpec> {
    check_tau(leak_tau)?;
    check_timesteps(timesteps, MAX_TIMESTEPS)?;
    net.validate()?;
    let full_scale = TemporalWeights::new(net.tau, net.timesteps)?.sum();
    let last = net.layers.len() - 1;
    let mut out = net.clone();
    for (l, layer) in out.layers.iter_mut().enumerate() {
        if l < last {
            layer.theta_out.iter_mut().for_each(|t| *t *= full_scale);
        }
        if l > 0 {
            layer.input_scale.iter_mut().for_each(|s| *s *= full_scale);
        }
    }
    out.timesteps = timesteps;
    out.tau = leak_tau;
    out.validate()?;
    Ok(out)
}

/// Converted network with each quantizer replaced by `clamp(v/θ, 0, Σq)`.
pub fn clamped_relaxed_forward(x: &[f64], net: &NetworkSpec) -> Result<Vec<f64>> {
    net.validate()?;
    let full_scale = TemporalWeights::new(net.tau, net.timesteps)?.sum();
    let mut values = x.to_vec();
    let last = net.layers.len() - 1;
    for (l, layer) in net.layers.iter().enumerate() {
        if values.len() != layer.input_len() {
            return Err(Error::Shape("input does not match layer".into()));
        }
        let v = layer.potential(&values);
        if l == last {
            return Ok(v);
        }
        let spatial = layer.shape.out_spatial();
        values = v
            .iter()
            .enumerate()
            .map(|(o, v)| (v / layer.theta_out[o / spatial]).clamp(0.0, full_scale))
            .collect();
    }
    unreachable!()
}
