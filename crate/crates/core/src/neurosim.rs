//! Cycle-level model of an event-driven spiking processor: a spike address
//! encoder feeding an array of accumulating PEs, followed by neuron units.
//!
//! Cost model per layer, all stages run back to back:
//! - encoder: windows of `detector_width` inputs with no spike in a time step
//!   are skipped for free; every active spike costs one cycle to emit its address
//! - PEs: `ceil(Σ fan_out(active spike) / num_pes)` accumulate cycles; weight
//!   fetch is assumed hidden behind accumulation
//! - neuron units: `ceil(M / neuron_units)` cycles per update round, `T` rounds
//!   for LIF and one for SpikePack
//! - a fixed `pipeline_fill_cycles` per layer
//!
//! Analog first-layer inputs count each nonzero value as one event, once.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{lif_network_forward, network_forward, LayerSpec, NetworkSpec};
use crate::spike_tensor::{PackedSpikes, SpikeMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub num_pes: usize,
    pub neuron_units: usize,
    pub detector_width: usize,
    pub clock_hz: f64,
    /// Joules per synaptic accumulate.
    pub energy_per_mac: f64,
    /// Joules per neuron state update.
    pub energy_per_neuron_update: f64,
    /// Joules per emitted spike address.
    pub energy_per_encode: f64,
    pub pipeline_fill_cycles: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_pes: 64,
            neuron_units: 16,
            detector_width: 16,
            clock_hz: 3e8,
            energy_per_mac: 0.9e-12,
            energy_per_neuron_update: 1.5e-12,
            energy_per_encode: 0.3e-12,
            pipeline_fill_cycles: 4,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_pes == 0 || self.neuron_units == 0 || self.detector_width == 0 {
            return Err(invalid("sim config", "unit counts must be >= 1"));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(invalid("clock_hz", "must be finite and > 0"));
        }
        let energies = [self.energy_per_mac, self.energy_per_neuron_update, self.energy_per_encode];
        if !energies.iter().all(|e| e.is_finite() && *e >= 0.0) {
            return Err(invalid("energy", "per-op energies must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeuronKind {
    Lif,
    Spikepack,
}

/// What arrives at a layer's inputs.
#[derive(Debug, Clone, Copy)]
pub enum LayerActivity<'a> {
    Analog(&'a [f64]),
    Packed(&'a PackedSpikes),
    Matrix(&'a SpikeMatrix),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerSimStats {
    pub active_spikes: u64,
    /// Nonempty `(time step, detector window)` groups.
    pub detector_windows: u64,
    pub encoder_cycles: u64,
    pub pe_cycles: u64,
    pub neuron_cycles: u64,
    pub fill_cycles: u64,
    pub cycles: u64,
    pub macs: u64,
    pub neuron_updates: u64,
    pub energy_joules: f64,
}

impl LayerSimStats {
    pub fn add(&mut self, o: &Self) {
        self.active_spikes += o.active_spikes;
        self.detector_windows += o.detector_windows;
        self.encoder_cycles += o.encoder_cycles;
        self.pe_cycles += o.pe_cycles;
        self.neuron_cycles += o.neuron_cycles;
        self.fill_cycles += o.fill_cycles;
        self.cycles += o.cycles;
        self.macs += o.macs;
        self.neuron_updates += o.neuron_updates;
        self.energy_joules += o.energy_joules;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub neuron_kind: NeuronKind,
    pub samples: usize,
    pub total_cycles: u64,
    pub latency_seconds: f64,
    pub energy_joules: f64,
    pub layers: Vec<LayerSimStats>,
}

impl SimTrace {
    /// Totals per-layer costs accumulated over `samples` inputs.
    pub fn from_layers(kind: NeuronKind, samples: usize, layers: Vec<LayerSimStats>, cfg: &SimConfig) -> Self {
        let total_cycles = layers.iter().map(|l| l.cycles).sum();
        let energy_joules = layers.iter().map(|l| l.energy_joules).sum();
        Self {
            neuron_kind: kind,
            samples,
            total_cycles,
            latency_seconds: total_cycles as f64 / cfg.clock_hz,
            energy_joules,
            layers,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Active input events as `(input index, time step)`.
fn events(activity: LayerActivity<'_>) -> Vec<(usize, usize)> {
    match activity {
        LayerActivity::Analog(x) => x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| (j, 0))
            .collect(),
        LayerActivity::Packed(p) => {
            let mut out = Vec::with_capacity(p.spike_count() as usize);
            for (j, &w) in p.words().iter().enumerate() {
                let mut bits = w;
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    out.push((j, p.timesteps() - 1 - b));
                    bits &= bits - 1;
                }
            }
            out
        }
        LayerActivity::Matrix(m) => {
            let mut out = Vec::with_capacity(m.spike_count());
            for j in 0..m.neurons() {
                for (t, &s) in m.row(j).iter().enumerate() {
                    if s == 1 {
                        out.push((j, t));
                    }
                }
            }
            out
        }
    }
}

fn activity_len(activity: LayerActivity<'_>) -> usize {
    match activity {
        LayerActivity::Analog(x) => x.len(),
        LayerActivity::Packed(p) => p.neurons(),
        LayerActivity::Matrix(m) => m.neurons(),
    }
}

/// Cost of one layer for one sample.
pub fn simulate_layer_stats(
    activity: LayerActivity<'_>,
    layer: &LayerSpec,
    timesteps: usize,
    cfg: &SimConfig,
    kind: NeuronKind,
) -> Result<LayerSimStats> {
    cfg.validate()?;
    layer.validate()?;
    if activity_len(activity) != layer.input_len() {
        return Err(Error::Shape(format!(
            "activity covers {} inputs, layer expects {}",
            activity_len(activity),
            layer.input_len()
        )));
    }
    let ev = events(activity);
    let mut windows: Vec<(usize, usize)> = ev.iter().map(|&(j, t)| (t, j / cfg.detector_width)).collect();
    windows.sort_unstable();
    windows.dedup();
    let macs: u64 = ev.iter().map(|&(j, _)| layer.shape.fan_out(j) as u64).sum();
    let active = ev.len() as u64;
    let m = layer.output_len() as u64;
    let rounds = match kind {
        NeuronKind::Lif => timesteps as u64,
        NeuronKind::Spikepack => 1,
    };
    let encoder_cycles = active;
    let pe_cycles = macs.div_ceil(cfg.num_pes as u64);
    let neuron_cycles = m.div_ceil(cfg.neuron_units as u64) * rounds;
    let fill_cycles = cfg.pipeline_fill_cycles;
    let neuron_updates = m * rounds;
    Ok(LayerSimStats {
        active_spikes: active,
        detector_windows: windows.len() as u64,
        encoder_cycles,
        pe_cycles,
        neuron_cycles,
        fill_cycles,
        cycles: encoder_cycles + pe_cycles + neuron_cycles + fill_cycles,
        macs,
        neuron_updates,
        energy_joules: macs as f64 * cfg.energy_per_mac
            + neuron_updates as f64 * cfg.energy_per_neuron_update
            + active as f64 * cfg.energy_per_encode,
    })
}

pub fn simulate_layer(
    activity: LayerActivity<'_>,
    layer: &LayerSpec,
    timesteps: usize,
    cfg: &SimConfig,
    kind: NeuronKind,
) -> Result<SimTrace> {
    let stats = simulate_layer_stats(activity, layer, timesteps, cfg, kind)?;
    Ok(SimTrace::from_layers(kind, 1, vec![stats], cfg))
}

/// Uniform draw in `[0, 1)` from a splitmix64 hash of `(seed, a, b)`.
fn hash_unit(seed: u64, a: u64, b: u64) -> f64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Removes roughly `fraction` of the spikes. A spike dropped at some fraction
/// is also dropped at every larger fraction with the same seed.
pub fn inject_sparsity_packed(spikes: &PackedSpikes, fraction: f64, seed: u64) -> Result<PackedSpikes> {
    let t_len = spikes.timesteps();
    let words = spikes
        .words()
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            let mut out = w;
            for b in 0..t_len {
                if w >> b & 1 == 1 && hash_unit(seed, j as u64, (t_len - 1 - b) as u64) < fraction {
                    out &= !(1u64 << b);
                }
            }
            out
        })
        .collect();
    PackedSpikes::from_words(words, t_len, spikes.tau())
}

pub fn inject_sparsity_matrix(spikes: &SpikeMatrix, fraction: f64, seed: u64) -> Result<SpikeMatrix> {
    let mut out = spikes.clone();
    for j in 0..spikes.neurons() {
        for t in 0..spikes.timesteps() {
            if spikes.get(j, t) == 1 && hash_unit(seed, j as u64, t as u64) < fraction {
                out.set(j, t, false);
            }
        }
    }
    Ok(out)
}

/// Runs every sample through the network, optionally removes a fraction of the
/// recorded hidden spikes, and sums the per-layer costs over the batch.
pub fn simulate_network_sparsified(
    net: &NetworkSpec,
    batch: &[Vec<f64>],
    cfg: &SimConfig,
    kind: NeuronKind,
    drop_fraction: f64,
    seed: u64,
) -> Result<SimTrace> {
    cfg.validate()?;
    net.validate()?;
    if batch.is_empty() {
        return Err(Error::Dataset("simulation batch is empty".into()));
    }
    if !(0.0..=1.0).contains(&drop_fraction) {
        return Err(invalid("drop_fraction", "must lie in [0, 1]"));
    }
    let mut totals = vec![LayerSimStats::default(); net.layers.len()];
    let t_len = net.timesteps;
    for (s, x) in batch.iter().enumerate() {
        let sample_seed = seed.wrapping_add(s as u64);
        let per_layer: Vec<LayerSimStats> = match kind {
            NeuronKind::Spikepack => {
                let out = network_forward(x, net)?;
                let mut stats = Vec::with_capacity(net.layers.len());
                stats.push(simulate_layer_stats(LayerActivity::Analog(x), &net.layers[0], t_len, cfg, kind)?);
                for (l, tr) in out.trace.iter().enumerate() {
                    let sparse = inject_sparsity_packed(&tr.spikes, drop_fraction, sample_seed ^ l as u64)?;
                    stats.push(simulate_layer_stats(LayerActivity::Packed(&sparse), &net.layers[l + 1], t_len, cfg, kind)?);
                }
                stats
            }
            NeuronKind::Lif => {
                let out = lif_network_forward(x, net)?;
                let mut stats = Vec::with_capacity(net.layers.len());
                stats.push(simulate_layer_stats(LayerActivity::Analog(x), &net.layers[0], t_len, cfg, kind)?);
                for (l, tr) in out.trace.iter().enumerate() {
                    let sparse = inject_sparsity_matrix(tr, drop_fraction, sample_seed ^ l as u64)?;
                    stats.push(simulate_layer_stats(LayerActivity::Matrix(&sparse), &net.layers[l + 1], t_len, cfg, kind)?);
                }
                stats
            }
        };
        for (acc, st) in totals.iter_mut().zip(&per_layer) {
            acc.add(st);
        }
    }
    Ok(SimTrace::from_layers(kind, batch.len(), totals, cfg))
}

pub fn simulate_network(net: &NetworkSpec, batch: &[Vec<f64>], cfg: &SimConfig, kind: NeuronKind) -> Result<SimTrace> {
    simulate_network_sparsified(net, batch, cfg, kind, 0.0, 0)
}
