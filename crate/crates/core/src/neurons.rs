//! Neuron evaluators: the LIF reference, the SpikePack serial decoder and the
//! SpikePack parallel quantizer.
//!
//! Both SpikePack routes work on the normalized potential `r = v_g / theta`,
//! so the dynamic thresholds become the dimensionless powers `tau^(T-t)`.
//! The serial decoder walks the time steps, keeping the potential spent by
//! earlier spikes. The parallel quantizer reads the word off directly: a
//! floor for `tau = 2`, a search over the reachable code values otherwise.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spike_tensor::{
    check_tau, check_timesteps, word_mask, PackedSpikes, SpikeMatrix, StateFootprint,
    MAX_TIMESTEPS,
};

/// Largest `T` for which a code table is built when `tau != 2`.
const MAX_TABLE_TIMESTEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparator {
    #[default]
    AtLeast,
    StrictlyGreater,
}

impl Comparator {
    #[inline]
    pub fn fires(self, potential: f64, threshold: f64) -> bool {
        match self {
            Comparator::AtLeast => potential >= threshold,
            Comparator::StrictlyGreater => potential > threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    #[default]
    GreedyFloor,
    Nearest,
}

/// Base threshold, shared or per neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Scalar(f64),
    PerNeuron(Vec<f64>),
    /// Neuron `i` uses `values[i / group]`; a conv channel spans `group` positions.
    PerChannel { values: Vec<f64>, group: usize },
}

impl Threshold {
    #[inline]
    pub fn for_neuron(&self, i: usize) -> f64 {
        match self {
            Threshold::Scalar(t) => *t,
            Threshold::PerNeuron(v) => v[i],
            Threshold::PerChannel { values, group } => values[i / group],
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Threshold::Scalar(t) => std::slice::from_ref(t),
            Threshold::PerNeuron(v) => v,
            Threshold::PerChannel { values, .. } => values,
        }
    }

    fn check_len(&self, neurons: usize) -> Result<()> {
        let expected = match self {
            Threshold::Scalar(_) => return Ok(()),
            Threshold::PerNeuron(v) => v.len(),
            Threshold::PerChannel { values, group } => values.len() * group,
        };
        if expected != neurons {
            return Err(Error::Shape(format!(
                "threshold covers {expected} neurons, input has {neurons}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronConfig {
    pub tau: f64,
    pub threshold: Threshold,
    pub timesteps: usize,
    pub comparator: Comparator,
    pub rounding: Rounding,
}

impl NeuronConfig {
    pub fn new(tau: f64, theta: f64, timesteps: usize) -> Result<Self> {
        Self::with_threshold(tau, Threshold::Scalar(theta), timesteps)
    }

    pub fn with_threshold(tau: f64, threshold: Threshold, timesteps: usize) -> Result<Self> {
        let cfg = Self {
            tau,
            threshold,
            timesteps,
            comparator: Comparator::default(),
            rounding: Rounding::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn comparator(mut self, comparator: Comparator) -> Self {
        self.comparator = comparator;
        self
    }

    pub fn rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        check_timesteps(self.timesteps, MAX_TIMESTEPS)?;
        if let Threshold::PerChannel { group: 0, .. } = self.threshold {
            return Err(invalid("threshold", "channel group size must be positive"));
        }
        if let Some(t) = self
            .threshold
            .values()
            .iter()
            .find(|t| !(t.is_finite() && **t > 0.0))
        {
            return Err(invalid("theta", format!("must be finite and > 0, got {t}")));
        }
        Ok(())
    }
}

/// `v / theta`, snapped onto the nearest whole number when within a few ulps
/// of it so that a potential of `fl(k * theta)` reads back as exactly `k`.
#[inline]
pub fn normalized_potential(v: f64, theta: f64) -> f64 {
    let r = v / theta;
    let k = r.round();
    if (r - k).abs() <= 4.0 * f64::EPSILON * r.abs() {
        k
    } else {
        r
    }
}

/// Precomputed decoding tables for one `(tau, T, comparator, rounding)`.
#[derive(Debug, Clone)]
pub struct Quantizer {
    tau: f64,
    timesteps: usize,
    comparator: Comparator,
    rounding: Rounding,
    /// Dynamic thresholds in units of theta, first step first.
    steps: Vec<f64>,
    /// Greedy-reachable codes sorted by value; unused for `tau = 2`.
    table: Option<Arc<CodeTable>>,
}

#[derive(Debug)]
struct CodeTable {
    values: Vec<f64>,
    codes: Vec<u64>,
}

type TableKey = (u64, usize);

fn table_cache() -> &'static Mutex<HashMap<TableKey, Arc<CodeTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<CodeTable>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

impl Quantizer {
    pub fn new(
        tau: f64,
        timesteps: usize,
        comparator: Comparator,
        rounding: Rounding,
    ) -> Result<Self> {
        check_tau(tau)?;
        check_timesteps(timesteps, MAX_TIMESTEPS)?;
        let steps = (1..=timesteps)
            .map(|t| tau.powi((timesteps - t) as i32))
            .collect();
        let table = if tau != 2.0 && timesteps <= MAX_TABLE_TIMESTEPS {
            let key = (tau.to_bits(), timesteps);
            let mut cache = table_cache().lock().expect("code table cache poisoned");
            Some(
                cache
                    .entry(key)
                    .or_insert_with(|| Arc::new(build_table(tau, timesteps)))
                    .clone(),
            )
        } else {
            None
        };
        Ok(Self {
            tau,
            timesteps,
            comparator,
            rounding,
            steps,
            table,
        })
    }

    pub fn for_config(cfg: &NeuronConfig) -> Result<Self> {
        Self::new(cfg.tau, cfg.timesteps, cfg.comparator, cfg.rounding)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    /// Sum of all dynamic thresholds: the value of the all-ones word.
    pub fn full_scale(&self) -> f64 {
        self.steps.iter().sum()
    }

    /// Time-stepped decoding of a normalized potential.
    ///
    /// Step `t` fires when the remaining potential `r - spent` clears
    /// `tau^(T-t)`; a spike then adds that threshold to `spent`. The comparison
    /// is evaluated as `r` against `spent + tau^(T-t)`, which is exact whenever
    /// the partial sums are representable (`tau` in {1.5, 2, 3}, `T <= 16`; any
    /// `T <= 53` for `tau = 2`).
    pub fn decode_serial(&self, r: f64) -> u64 {
        let mut spent = 0.0;
        let mut word = 0u64;
        for &step in &self.steps {
            word <<= 1;
            let threshold = spent + step;
            if self.comparator.fires(r, threshold) {
                spent = threshold;
                word |= 1;
            }
        }
        word
    }

    /// Direct quantization of a normalized potential. With greedy-floor
    /// rounding this equals [`Quantizer::decode_serial`].
    pub fn quantize(&self, r: f64) -> u64 {
        let max = word_mask(self.timesteps);
        if self.tau == 2.0 {
            let level = match (self.rounding, self.comparator) {
                (Rounding::Nearest, _) => r.round(),
                (Rounding::GreedyFloor, Comparator::AtLeast) => r.floor(),
                (Rounding::GreedyFloor, Comparator::StrictlyGreater) => r.ceil() - 1.0,
            };
            return if level <= 0.0 {
                0
            } else if level >= max as f64 {
                max
            } else {
                level as u64
            };
        }
        let Some(table) = &self.table else {
            // No table past MAX_TABLE_TIMESTEPS; the recursion is the definition.
            return self.decode_serial(r);
        };
        let below = match self.comparator {
            Comparator::AtLeast => table.values.partition_point(|&v| v <= r),
            Comparator::StrictlyGreater => table.values.partition_point(|&v| v < r),
        };
        let idx = below.saturating_sub(1);
        match self.rounding {
            Rounding::GreedyFloor => table.codes[idx],
            Rounding::Nearest => {
                let upper = (idx + 1).min(table.values.len() - 1);
                if (table.values[upper] - r).abs() <= (r - table.values[idx]).abs() {
                    table.codes[upper]
                } else {
                    table.codes[idx]
                }
            }
        }
    }
}

/// Codes the greedy decoder can emit: every zero bit must see a lower-order
/// remainder strictly below its own weight.
fn build_table(tau: f64, timesteps: usize) -> CodeTable {
    let weights: Vec<f64> = (0..timesteps).map(|k| tau.powi(k as i32)).collect();
    let mut entries: Vec<(f64, u64)> = Vec::new();
    'codes: for code in 0..(1u64 << timesteps) {
        let mut low = 0.0;
        for (k, &w) in weights.iter().enumerate() {
            if (code >> k) & 1 == 1 {
                low += w;
            } else if low >= w {
                continue 'codes;
            }
        }
        let value = (0..timesteps)
            .rev()
            .filter(|&k| (code >> k) & 1 == 1)
            .fold(0.0, |acc, k| acc + weights[k]);
        entries.push((value, code));
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    CodeTable {
        values: entries.iter().map(|e| e.0).collect(),
        codes: entries.iter().map(|e| e.1).collect(),
    }
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Decodes each global potential into a spike word by the time-stepped
/// dynamic-threshold recursion.
pub fn spikepack_decode_serial(v_g: &[f64], cfg: &NeuronConfig) -> Result<PackedSpikes> {
    cfg.validate()?;
    cfg.threshold.check_len(v_g.len())?;
    check_finite(v_g, "global potential")?;
    let quantizer = Quantizer::for_config(cfg)?;
    let words = v_g
        .iter()
        .enumerate()
        .map(|(i, &v)| quantizer.decode_serial(normalized_potential(v, cfg.threshold.for_neuron(i))))
        .collect();
    PackedSpikes::from_words(words, cfg.timesteps, cfg.tau)
}

/// Quantizes each global potential straight to its spike word.
pub fn spikepack_quantize_parallel(v_g: &[f64], cfg: &NeuronConfig) -> Result<PackedSpikes> {
    cfg.validate()?;
    cfg.threshold.check_len(v_g.len())?;
    check_finite(v_g, "global potential")?;
    let quantizer = Quantizer::for_config(cfg)?;
    let words = v_g
        .iter()
        .enumerate()
        .map(|(i, &v)| quantizer.quantize(normalized_potential(v, cfg.threshold.for_neuron(i))))
        .collect();
    PackedSpikes::from_words(words, cfg.timesteps, cfg.tau)
}

/// Membrane state of a LIF population between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LifState {
    pub v: Vec<f64>,
    pub last_spike: Vec<u8>,
}

impl LifState {
    pub fn new(neurons: usize) -> Self {
        Self {
            v: vec![0.0; neurons],
            last_spike: vec![0; neurons],
        }
    }
}

impl StateFootprint for LifState {
    fn state_bytes(&self) -> usize {
        std::mem::size_of_val(self.v.as_slice()) + std::mem::size_of_val(self.last_spike.as_slice())
    }
}

/// One LIF update: leak, integrate, subtract `theta` for the previous spike,
/// then fire strictly above `theta`.
#[inline]
pub fn lif_update(v: f64, input: f64, prev_spike: bool, theta: f64, tau: f64) -> (f64, bool) {
    let v = v / tau + input - if prev_spike { theta } else { 0.0 };
    (v, v > theta)
}

pub fn lif_step(
    state: LifState,
    input_current: &[f64],
    cfg: &NeuronConfig,
) -> Result<(LifState, Vec<u8>)> {
    let n = state.v.len();
    if input_current.len() != n || state.last_spike.len() != n {
        return Err(Error::Shape(format!(
            "LIF state has {n} neurons, input has {}",
            input_current.len()
        )));
    }
    cfg.threshold.check_len(n)?;
    let LifState { mut v, mut last_spike } = state;
    for i in 0..n {
        let (nv, fired) = lif_update(
            v[i],
            input_current[i],
            last_spike[i] == 1,
            cfg.threshold.for_neuron(i),
            cfg.tau,
        );
        v[i] = nv;
        last_spike[i] = fired as u8;
    }
    let spikes = last_spike.clone();
    Ok((LifState { v, last_spike }, spikes))
}

/// Runs one post-synaptic LIF neuron over the whole input train, threading
/// the membrane state through every step.
pub fn lif_run(inputs: &SpikeMatrix, weights: &[f64], cfg: &NeuronConfig) -> Result<SpikeMatrix> {
    if weights.len() != inputs.neurons() {
        return Err(Error::Shape(format!(
            "{} weights for {} inputs",
            weights.len(),
            inputs.neurons()
        )));
    }
    let t_len = inputs.timesteps();
    let mut state = LifState::new(1);
    let mut out = SpikeMatrix::zeros(1, t_len)?;
    for t in 0..t_len {
        let current: f64 = (0..inputs.neurons())
            .map(|n| weights[n] * inputs.get(n, t) as f64)
            .sum();
        let (next, spikes) = lif_step(state, &[current], cfg)?;
        state = next;
        out.set(0, t, spikes[0] == 1);
    }
    Ok(out)
}
