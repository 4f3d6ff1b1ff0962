//! Feed-forward SNN engine in the compressed domain.
//!
//! Each layer computes `v_g = W (input_scale * evaluate(s_zip)) + b` and
//! re-quantizes it into packed spikes; the last layer returns `v_g` as logits.
//! Layer 0 takes real-valued input directly as its pre-synaptic value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neurons::{
    lif_step, spikepack_quantize_parallel, Comparator, LifState, NeuronConfig, Rounding,
    Threshold,
};
use crate::spike_tensor::{check_tau, check_timesteps, evaluate, PackedSpikes, SpikeMatrix, MAX_TIMESTEPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dGeometry {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dGeometry {
    pub fn out_height(&self) -> usize {
        (self.in_height + 2 * self.padding - self.kernel_h) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.in_width + 2 * self.padding - self.kernel_w) / self.stride + 1
    }

    fn validate(&self) -> Result<()> {
        let g = self;
        if [g.in_channels, g.in_height, g.in_width, g.out_channels, g.kernel_h, g.kernel_w, g.stride]
            .contains(&0)
        {
            return Err(Error::Shape(format!("degenerate conv geometry {g:?}")));
        }
        if g.kernel_h > g.in_height + 2 * g.padding || g.kernel_w > g.in_width + 2 * g.padding {
            return Err(Error::Shape(format!("kernel larger than padded input in {g:?}")));
        }
        Ok(())
    }

    /// Output positions along one axis touched by input coordinate `i`.
    fn reach(i: usize, kernel: usize, stride: usize, padding: usize, out_len: usize) -> usize {
        let p = i + padding;
        // o*stride <= p <= o*stride + kernel - 1
        let lo = if p + 1 > kernel { (p + 1 - kernel).div_ceil(stride) } else { 0 };
        let hi = (p / stride).min(out_len.saturating_sub(1));
        if hi < lo {
            0
        } else {
            hi - lo + 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerShape {
    Dense { inputs: usize, outputs: usize },
    Conv2d(Conv2dGeometry),
}

impl LayerShape {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerShape::Dense { .. } => LayerKind::Dense,
            LayerShape::Conv2d(_) => LayerKind::Conv2d,
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            LayerShape::Dense { inputs, .. } => *inputs,
            LayerShape::Conv2d(g) => g.in_channels * g.in_height * g.in_width,
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            LayerShape::Dense { outputs, .. } => *outputs,
            LayerShape::Conv2d(g) => g.out_channels * g.out_height() * g.out_width(),
        }
    }

    pub fn in_channels(&self) -> usize {
        match self {
            LayerShape::Dense { inputs, .. } => *inputs,
            LayerShape::Conv2d(g) => g.in_channels,
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            LayerShape::Dense { outputs, .. } => *outputs,
            LayerShape::Conv2d(g) => g.out_channels,
        }
    }

    /// Spatial positions per input channel (1 for dense).
    pub fn in_spatial(&self) -> usize {
        match self {
            LayerShape::Dense { .. } => 1,
            LayerShape::Conv2d(g) => g.in_height * g.in_width,
        }
    }

    pub fn out_spatial(&self) -> usize {
        match self {
            LayerShape::Dense { .. } => 1,
            LayerShape::Conv2d(g) => g.out_height() * g.out_width(),
        }
    }

    pub fn weight_len(&self) -> usize {
        match self {
            LayerShape::Dense { inputs, outputs } => inputs * outputs,
            LayerShape::Conv2d(g) => g.out_channels * g.in_channels * g.kernel_h * g.kernel_w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LayerShape::Dense { inputs, outputs } if *inputs == 0 || *outputs == 0 => {
                Err(Error::Shape("dense layer with zero width".into()))
            }
            LayerShape::Dense { .. } => Ok(()),
            LayerShape::Conv2d(g) => g.validate(),
        }
    }

    /// Number of output neurons a unit at input index `j` projects to.
    pub fn fan_out(&self, j: usize) -> usize {
        match self {
            LayerShape::Dense { outputs, .. } => *outputs,
            LayerShape::Conv2d(g) => {
                let pos = j % (g.in_height * g.in_width);
                let (y, x) = (pos / g.in_width, pos % g.in_width);
                g.out_channels
                    * Conv2dGeometry::reach(y, g.kernel_h, g.stride, g.padding, g.out_height())
                    * Conv2dGeometry::reach(x, g.kernel_w, g.stride, g.padding, g.out_width())
            }
        }
    }

    /// Visits every (output index, input index, weight index) triple of the
    /// affine map in a fixed order.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        match *self {
            LayerShape::Dense { inputs, outputs } => {
                for o in 0..outputs {
                    for i in 0..inputs {
                        f(o, i, o * inputs + i);
                    }
                }
            }
            LayerShape::Conv2d(g) => {
                let (oh, ow) = (g.out_height(), g.out_width());
                for oc in 0..g.out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let o = (oc * oh + oy) * ow + ox;
                            for ic in 0..g.in_channels {
                                for ky in 0..g.kernel_h {
                                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                                    if iy < 0 || iy >= g.in_height as isize {
                                        continue;
                                    }
                                    for kx in 0..g.kernel_w {
                                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                        if ix < 0 || ix >= g.in_width as isize {
                                            continue;
                                        }
                                        let i = (ic * g.in_height + iy as usize) * g.in_width
                                            + ix as usize;
                                        let w = ((oc * g.in_channels + ic) * g.kernel_h + ky)
                                            * g.kernel_w
                                            + kx;
                                        f(o, i, w);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// `W x + b`, with `b` broadcast over each output channel.
    pub fn affine(&self, weights: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
        let spatial = self.out_spatial();
        let mut out: Vec<f64> = (0..self.output_len()).map(|o| bias[o / spatial]).collect();
        let mut acc = vec![0.0; self.output_len()];
        self.for_each_tap(|o, i, w| acc[o] += weights[w] * x[i]);
        for (o, a) in out.iter_mut().zip(acc) {
            *o += a;
        }
        out
    }

    /// `W^T g`.
    pub fn transpose_apply(&self, weights: &[f64], grad_out: &[f64]) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.input_len()];
        self.for_each_tap(|o, i, w| grad_in[i] += weights[w] * grad_out[o]);
        grad_in
    }

    /// `dL/dW` and `dL/db` for upstream `grad_out` at input `x`.
    pub fn param_grads(&self, grad_out: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gw = vec![0.0; self.weight_len()];
        self.for_each_tap(|o, i, w| gw[w] += grad_out[o] * x[i]);
        let spatial = self.out_spatial();
        let mut gb = vec![0.0; self.out_channels()];
        for (o, g) in grad_out.iter().enumerate() {
            gb[o / spatial] += g;
        }
        (gw, gb)
    }
}

/// One affine layer of a converted or directly trained SNN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub shape: LayerShape,
    pub weights: Vec<f64>,
    /// One entry per output channel.
    pub bias: Vec<f64>,
    /// Per output channel. Ignored on the readout layer.
    pub theta_out: Vec<f64>,
    /// Per input channel: the producing layer's threshold folded onto its words.
    pub input_scale: Vec<f64>,
}

impl LayerSpec {
    /// A layer with unit input scale and unit thresholds.
    pub fn new(shape: LayerShape, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let layer = Self {
            theta_out: vec![1.0; shape.out_channels()],
            input_scale: vec![1.0; shape.in_channels()],
            shape,
            weights,
            bias,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn kind(&self) -> LayerKind {
        self.shape.kind()
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let s = &self.shape;
        let checks = [
            ("weights", self.weights.len(), s.weight_len()),
            ("bias", self.bias.len(), s.out_channels()),
            ("theta_out", self.theta_out.len(), s.out_channels()),
            ("input_scale", self.input_scale.len(), s.in_channels()),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Shape(format!("{name} has {got} entries, expected {want}")));
            }
        }
        if !self.weights.iter().chain(&self.bias).chain(&self.input_scale).all(|w| w.is_finite()) {
            return Err(Error::NonFinite("layer parameters"));
        }
        if !self.theta_out.iter().all(|t| t.is_finite() && *t > 0.0) {
            return Err(Error::Domain("theta_out must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.shape.input_len()
    }

    pub fn output_len(&self) -> usize {
        self.shape.output_len()
    }

    /// Multiplies each pre-synaptic value by its channel's input scale.
    pub fn scale_input(&self, values: &[f64]) -> Vec<f64> {
        let spatial = self.shape.in_spatial();
        values
            .iter()
            .enumerate()
            .map(|(j, v)| v * self.input_scale[j / spatial])
            .collect()
    }

    /// `v_g = W (input_scale * values) + b`.
    pub fn potential(&self, values: &[f64]) -> Vec<f64> {
        self.shape.affine(&self.weights, &self.bias, &self.scale_input(values))
    }

    pub fn output_threshold(&self) -> Threshold {
        Threshold::PerChannel {
            values: self.theta_out.clone(),
            group: self.shape.out_spatial(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputEncoding {
    /// Real-valued input is used directly as layer 0's pre-synaptic value.
    #[default]
    AnalogDirect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub timesteps: usize,
    pub tau: f64,
    pub comparator: Comparator,
    pub rounding: Rounding,
    pub input_encoding: InputEncoding,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>, timesteps: usize, tau: f64) -> Result<Self> {
        let net = Self {
            layers,
            timesteps,
            tau,
            comparator: Comparator::default(),
            rounding: Rounding::default(),
            input_encoding: InputEncoding::default(),
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        check_timesteps(self.timesteps, MAX_TIMESTEPS)?;
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            layer
                .validate()
                .map_err(|e| Error::Shape(format!("layer {l}: {e}")))?;
        }
        for (l, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output_len() != pair[1].input_len() {
                return Err(Error::Shape(format!(
                    "layer {l} emits {} values, layer {} expects {}",
                    pair[0].output_len(),
                    l + 1,
                    pair[1].input_len()
                )));
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].input_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_len())
    }

    /// Neuron settings for layer `l` with that layer's per-channel thresholds.
    pub fn neuron_config(&self, l: usize) -> NeuronConfig {
        NeuronConfig {
            tau: self.tau,
            threshold: self.layers[l].output_threshold(),
            timesteps: self.timesteps,
            comparator: self.comparator,
            rounding: self.rounding,
        }
    }
}

/// Pre-synaptic input of a layer.
#[derive(Debug, Clone, Copy)]
pub enum LayerInput<'a> {
    Analog(&'a [f64]),
    Packed(&'a PackedSpikes),
}

/// Pre-synaptic values seen by a layer: the raw input or `evaluate(s_zip)`.
pub fn presynaptic_values(input: LayerInput<'_>, layer: &LayerSpec, cfg: &NeuronConfig) -> Result<Vec<f64>> {
    let values = match input {
        LayerInput::Analog(x) => {
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("analog input"));
            }
            x.to_vec()
        }
        LayerInput::Packed(p) => {
            if p.timesteps() != cfg.timesteps || p.tau() != cfg.tau {
                return Err(Error::Shape(format!(
                    "spikes carry (T={}, tau={}), layer runs (T={}, tau={})",
                    p.timesteps(),
                    p.tau(),
                    cfg.timesteps,
                    cfg.tau
                )));
            }
            evaluate(p)
        }
    };
    if values.len() != layer.input_len() {
        return Err(Error::Shape(format!(
            "layer expects {} inputs, got {}",
            layer.input_len(),
            values.len()
        )));
    }
    Ok(values)
}

/// Computes `v_g` for a layer and quantizes it with the layer's per-channel
/// thresholds. `cfg` supplies `tau`, `T`, comparator and rounding; its own
/// threshold is replaced by `layer.theta_out`.
pub fn layer_forward(input: LayerInput<'_>, layer: &LayerSpec, cfg: &NeuronConfig) -> Result<PackedSpikes> {
    layer.validate()?;
    let values = presynaptic_values(input, layer, cfg)?;
    let v_g = layer.potential(&values);
    let cfg = NeuronConfig {
        threshold: layer.output_threshold(),
        ..cfg.clone()
    };
    spikepack_quantize_parallel(&v_g, &cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub spikes: PackedSpikes,
    pub firing_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput {
    pub logits: Vec<f64>,
    /// One entry per hidden (spiking) layer.
    pub trace: Vec<LayerTrace>,
}

impl NetworkOutput {
    pub fn predicted_class(&self) -> usize {
        argmax(&self.logits)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

pub fn network_forward(input: &[f64], net: &NetworkSpec) -> Result<NetworkOutput> {
    net.validate()?;
    let last = net.layers.len() - 1;
    let mut trace = Vec::with_capacity(last);
    for l in 0..last {
        let cfg = net.neuron_config(l);
        let spikes = match trace.last() {
            None => layer_forward(LayerInput::Analog(input), &net.layers[l], &cfg)?,
            Some(LayerTrace { spikes, .. }) => {
                layer_forward(LayerInput::Packed(spikes), &net.layers[l], &cfg)?
            }
        };
        let firing_rate = spikes.firing_rate();
        trace.push(LayerTrace { spikes, firing_rate });
    }
    let cfg = net.neuron_config(last);
    let values = match trace.last() {
        None => presynaptic_values(LayerInput::Analog(input), &net.layers[last], &cfg)?,
        Some(t) => presynaptic_values(LayerInput::Packed(&t.spikes), &net.layers[last], &cfg)?,
    };
    Ok(NetworkOutput {
        logits: net.layers[last].potential(&values),
        trace,
    })
}

/// Per-sample forward passes in parallel; results keep input order.
pub fn network_forward_batch(inputs: &[Vec<f64>], net: &NetworkSpec) -> Result<Vec<NetworkOutput>> {
    inputs.par_iter().map(|x| network_forward(x, net)).collect()
}

/// Fraction of samples whose logits argmax equals the label.
pub fn accuracy(net: &NetworkSpec, inputs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let outputs = network_forward_batch(inputs, net)?;
    let correct = outputs
        .iter()
        .zip(labels)
        .filter(|(o, &y)| o.predicted_class() == y)
        .count();
    Ok(correct as f64 / inputs.len().max(1) as f64)
}

/// Pre-synaptic drive of a LIF layer.
#[derive(Debug, Clone, Copy)]
pub enum LifInput<'a> {
    /// Constant current source applied at every step.
    Analog(&'a [f64]),
    Spikes(&'a SpikeMatrix),
}

/// Runs a LIF population over `timesteps` steps using the layer's weights,
/// `theta_out` as firing threshold and `input_scale` on incoming spikes.
/// Returns the output spike record and the final membrane state.
pub fn lif_layer_forward(
    input: LifInput<'_>,
    layer: &LayerSpec,
    timesteps: usize,
    tau: f64,
) -> Result<(SpikeMatrix, LifState)> {
    let m = layer.output_len();
    let cfg = NeuronConfig {
        tau,
        threshold: layer.output_threshold(),
        timesteps: timesteps.min(MAX_TIMESTEPS),
        comparator: Comparator::StrictlyGreater,
        rounding: Rounding::GreedyFloor,
    };
    let analog_current = match input {
        LifInput::Analog(x) => {
            if x.len() != layer.input_len() {
                return Err(Error::Shape(format!("layer expects {} inputs, got {}", layer.input_len(), x.len())));
            }
            Some(layer.potential(x))
        }
        LifInput::Spikes(s) => {
            if s.neurons() != layer.input_len() || s.timesteps() != timesteps {
                return Err(Error::Shape(format!(
                    "spike record {}x{} does not match layer input {} over {timesteps} steps",
                    s.neurons(),
                    s.timesteps(),
                    layer.input_len()
                )));
            }
            None
        }
    };
    let mut state = LifState::new(m);
    let mut out = SpikeMatrix::zeros(m, timesteps)?;
    for t in 0..timesteps {
        let current = match (&analog_current, input) {
            (Some(c), _) => c.clone(),
            (None, LifInput::Spikes(s)) => {
                let col: Vec<f64> = s.column(t).into_iter().map(f64::from).collect();
                layer.potential(&col)
            }
            (None, LifInput::Analog(_)) => unreachable!(),
        };
        let (next, spikes) = lif_step(state, &current, &cfg)?;
        state = next;
        for (n, &s) in spikes.iter().enumerate() {
            if s == 1 {
                out.set(n, t, true);
            }
        }
    }
    Ok((out, state))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifNetworkOutput {
    pub logits: Vec<f64>,
    /// Spike record of each hidden layer.
    pub trace: Vec<SpikeMatrix>,
}

/// Time-stepped LIF evaluation of the same layer stack. Hidden layers fire
/// per step; the readout averages its input current over the window.
pub fn lif_network_forward(input: &[f64], net: &NetworkSpec) -> Result<LifNetworkOutput> {
    net.validate()?;
    let t_len = net.timesteps;
    let last = net.layers.len() - 1;
    let mut trace: Vec<SpikeMatrix> = Vec::with_capacity(last);
    for l in 0..last {
        let drive = match trace.last() {
            None => LifInput::Analog(input),
            Some(s) => LifInput::Spikes(s),
        };
        let (spikes, _) = lif_layer_forward(drive, &net.layers[l], t_len, net.tau)?;
        trace.push(spikes);
    }
    let readout = &net.layers[last];
    let logits = match trace.last() {
        None => readout.potential(input),
        Some(s) => {
            let mut sum = vec![0.0; readout.output_len()];
            for t in 0..t_len {
                let col: Vec<f64> = s.column(t).into_iter().map(f64::from).collect();
                for (acc, v) in sum.iter_mut().zip(readout.potential(&col)) {
                    *acc += v;
                }
            }
            sum.into_iter().map(|v| v / t_len as f64).collect()
        }
    };
    Ok(LifNetworkOutput { logits, trace })
}
