//! Information carried by one output neuron: closed-form Gaussian estimates,
//! a Monte Carlo entropy estimator for SpikePack and LIF, and the SOP workload
//! metric.

use std::f64::consts::{E, LN_2, PI};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::neurons::{lif_update, normalized_potential, Comparator, Quantizer, Rounding};
use crate::spike_tensor::{check_tau, check_timesteps, word_value, TemporalWeights, MAX_TIMESTEPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaRule {
    /// `θ = 6 σ_vg / 2^T`: the ±3σ range spread over `2^T` levels.
    SixSigma,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiExperimentConfig {
    /// Pre-synaptic neurons.
    pub n: usize,
    pub timesteps: usize,
    /// Input spike probability per slot.
    pub p: f64,
    /// Weight variance.
    pub sigma2: f64,
    pub tau: f64,
    pub theta_rule: ThetaRule,
    pub samples: usize,
    pub seed: u64,
    /// LIF firing threshold for the Monte Carlo comparison.
    pub lif_theta: f64,
    /// Standard error above which an estimate is flagged.
    pub stderr_tolerance: f64,
}

impl Default for MiExperimentConfig {
    fn default() -> Self {
        Self {
            n: 16,
            timesteps: 16,
            p: 0.5,
            sigma2: 1.0,
            tau: 2.0,
            theta_rule: ThetaRule::SixSigma,
            samples: 1_000_000,
            seed: 0,
            lif_theta: 1.0,
            stderr_tolerance: 0.05,
        }
    }
}

impl MiExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        check_timesteps(self.timesteps, MAX_TIMESTEPS)?;
        if self.n == 0 {
            return Err(invalid("n", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid("p", "must lie in [0, 1]"));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(invalid("sigma2", "must be finite and > 0"));
        }
        if self.samples == 0 {
            return Err(invalid("samples", "must be >= 1"));
        }
        if !(self.lif_theta.is_finite() && self.lif_theta >= 0.0) {
            return Err(invalid("lif_theta", "must be finite and >= 0"));
        }
        if let ThetaRule::Explicit(t) = self.theta_rule {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Domain(format!("explicit theta {t} must be > 0")));
            }
        }
        Ok(())
    }

    fn temporal_sum(&self) -> f64 {
        (0..self.timesteps).map(|k| self.tau.powi(k as i32)).sum()
    }

    /// Threshold used by the SpikePack neuron.
    pub fn theta(&self) -> f64 {
        match self.theta_rule {
            ThetaRule::SixSigma => 6.0 * analytic_variance_vg(self).sqrt() / 2f64.powi(self.timesteps as i32),
            ThetaRule::Explicit(t) => t,
        }
    }

    /// Per-step input current variance `σ² N p (1-p)`.
    pub fn step_variance(&self) -> f64 {
        self.sigma2 * self.n as f64 * self.p * (1.0 - self.p)
    }
}

/// `σ² N p(1-p) (Σ_t q_t)²`.
pub fn analytic_variance_vg(cfg: &MiExperimentConfig) -> f64 {
    cfg.step_variance() * cfg.temporal_sum().powi(2)
}

/// `½ log2(12 σ_vg² / θ²)`.
pub fn analytic_mi_spikepack(cfg: &MiExperimentConfig) -> Result<f64> {
    let theta = cfg.theta();
    if theta.is_nan() || theta <= 0.0 {
        return Err(Error::Domain(format!("theta {theta} must be > 0")));
    }
    Ok(0.5 * (12.0 * analytic_variance_vg(cfg) / (theta * theta)).log2())
}

/// `T · H(Q(θ / σ'))` with `σ'² = σ² N p(1-p)`.
pub fn analytic_mi_lif_bound(cfg: &MiExperimentConfig, theta: f64) -> f64 {
    let sd = cfg.step_variance().sqrt();
    let ratio = if sd > 0.0 { theta / sd } else { f64::INFINITY };
    cfg.timesteps as f64 * binary_entropy(gaussian_q(ratio))
}

/// Gaussian tail `P(Z > x) = ½ erfc(x / √2)`.
pub fn gaussian_q(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Entropy in bits of a Bernoulli(p) variable.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// `½ log2(2πe σ²)` bits.
pub fn gaussian_differential_entropy(variance: f64) -> f64 {
    0.5 * (2.0 * PI * E * variance).log2()
}

/// Entropy of uniform quantization noise of width `θ`: `log2 θ − log2 √12`.
pub fn conditional_entropy_quantizer(theta: f64) -> Result<f64> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::Domain(format!("theta {theta} must be > 0")));
    }
    Ok(theta.log2() - 12f64.sqrt().log2())
}

/// Synaptic operations `fr × FLOPs × T`.
pub fn sop(firing_rate: f64, flops: f64, timesteps: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&firing_rate) {
        return Err(invalid("firing_rate", "must lie in [0, 1]"));
    }
    if !(flops.is_finite() && flops >= 0.0) {
        return Err(invalid("flops", "must be finite and >= 0"));
    }
    Ok(firing_rate * flops * timesteps as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiModel {
    Spikepack,
    Lif,
}

impl MiModel {
    pub fn name(self) -> &'static str {
        match self {
            MiModel::Spikepack => "spikepack",
            MiModel::Lif => "lif",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub bits: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Distinct output words observed.
    pub distinct: usize,
    /// Standard error exceeded the configured tolerance.
    pub insufficient: bool,
}

/// Plug-in entropy of the sample with the Miller–Madow correction
/// `(K − 1) / (2 n ln 2)`, and the standard error `sqrt(Var[−log2 p̂] / n)`.
/// Sorts `words` in place.
pub fn entropy_miller_madow(words: &mut [u64]) -> (f64, f64, usize) {
    let n = words.len();
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    words.sort_unstable();
    let nf = n as f64;
    let (mut h, mut h2, mut k) = (0.0, 0.0, 0usize);
    let mut i = 0;
    while i < n {
        let j = i + words[i..].partition_point(|&w| w == words[i]);
        let c = (j - i) as f64;
        let info = -(c / nf).log2();
        h += c * info;
        h2 += c * info * info;
        k += 1;
        i = j;
    }
    let mean = h / nf;
    let var = (h2 / nf - mean * mean).max(0.0);
    let corrected = mean + (k as f64 - 1.0) / (2.0 * nf * LN_2);
    (corrected, (var / nf).sqrt(), k)
}

const CHUNK: usize = 1 << 16;

/// Monte Carlo estimate of the information an output word carries about the
/// inputs. Both neurons are deterministic given inputs and weights, so this
/// is the entropy of the output word. Weights are redrawn for every sample.
///
/// The SpikePack neuron quantizes `v_g + θ Σq / 2`, centring the zero-mean
/// potential in its representable range. The LIF neuron runs the leaky
/// recursion with threshold `lif_theta` and leak `tau`.
pub fn monte_carlo_mi(cfg: &MiExperimentConfig, model: MiModel) -> Result<MiEstimate> {
    cfg.validate()?;
    let theta = cfg.theta();
    let weights = TemporalWeights::new(cfg.tau, cfg.timesteps)?;
    let offset = theta * weights.sum() / 2.0;
    let quantizer = Quantizer::new(cfg.tau, cfg.timesteps, Comparator::AtLeast, Rounding::GreedyFloor)?;
    let normal = Normal::new(0.0, cfg.sigma2.sqrt()).map_err(|e| invalid("sigma2", e.to_string()))?;
    let chunks = cfg.samples.div_ceil(CHUNK);
    let mut words: Vec<u64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(cfg.samples - c * CHUNK);
            let mut w = vec![0.0; cfg.n];
            let mut inputs = vec![0u64; cfg.n];
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                for (wi, xi) in w.iter_mut().zip(inputs.iter_mut()) {
                    *wi = normal.sample(&mut rng);
                    let mut word = 0u64;
                    for _ in 0..cfg.timesteps {
                        word = word << 1 | u64::from(rng.random_bool(cfg.p));
                    }
                    *xi = word;
                }
                out.push(match model {
                    MiModel::Spikepack => {
                        let v_g: f64 = w
                            .iter()
                            .zip(&inputs)
                            .map(|(wi, &x)| wi * word_value(x, cfg.timesteps, cfg.tau))
                            .sum();
                        quantizer.quantize(normalized_potential(v_g + offset, theta))
                    }
                    MiModel::Lif => lif_word(&w, &inputs, cfg),
                });
            }
            out
        })
        .flatten()
        .collect();
    let (bits, stderr, distinct) = entropy_miller_madow(&mut words);
    Ok(MiEstimate {
        bits,
        stderr,
        samples: cfg.samples,
        distinct,
        insufficient: stderr > cfg.stderr_tolerance,
    })
}

/// Output word of one LIF neuron driven by `inputs` (first step in the top bit).
fn lif_word(w: &[f64], inputs: &[u64], cfg: &MiExperimentConfig) -> u64 {
    let (mut v, mut spike, mut word) = (0.0, false, 0u64);
    for t in 0..cfg.timesteps {
        let shift = cfg.timesteps - 1 - t;
        let current: f64 = w
            .iter()
            .zip(inputs)
            .filter(|(_, &x)| x >> shift & 1 == 1)
            .map(|(wi, _)| wi)
            .sum();
        (v, spike) = lif_update(v, current, spike, cfg.lif_theta, cfg.tau);
        word = word << 1 | u64::from(spike);
    }
    word
}

/// One CSV row of an MI sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub timesteps: usize,
    pub p: f64,
    pub sigma2: f64,
    pub tau: f64,
    pub theta: f64,
    pub model: String,
    pub analytic_bits: f64,
    pub mc_bits: f64,
    pub mc_stderr: f64,
    pub samples: usize,
    pub seed: u64,
    pub flag: String,
}

/// Analytic value and Monte Carlo estimate for one model at one grid point.
/// The LIF analytic column is its independence bound.
pub fn mi_row(cfg: &MiExperimentConfig, model: MiModel) -> Result<MiRow> {
    let est = monte_carlo_mi(cfg, model)?;
    let (theta, analytic) = match model {
        MiModel::Spikepack => (cfg.theta(), analytic_mi_spikepack(cfg)?),
        MiModel::Lif => (cfg.lif_theta, analytic_mi_lif_bound(cfg, cfg.lif_theta)),
    };
    Ok(MiRow {
        n: cfg.n,
        timesteps: cfg.timesteps,
        p: cfg.p,
        sigma2: cfg.sigma2,
        tau: cfg.tau,
        theta,
        model: model.name().to_string(),
        analytic_bits: analytic,
        mc_bits: est.bits,
        mc_stderr: est.stderr,
        samples: est.samples,
        seed: cfg.seed,
        flag: if est.insufficient { "insufficient-samples" } else { "ok" }.to_string(),
    })
}

pub fn write_mi_csv<W: Write>(out: W, rows: &[MiRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
