//! Bit-packed spike trains.
//!
//! A spike train of `T <= 64` steps is stored as one `u64` word per neuron.
//! Time step `t` (1-based) lives at bit position `T - t`, so the first step is
//! the most significant used bit and the word read as an unsigned integer is
//! the train weighted by `q = [2^(T-1), ..., 2^0]`. For other `tau` the word is
//! still the canonical form and the weighted sum is computed on demand.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{invalid, Error, Result};

pub const MAX_TIMESTEPS: usize = 64;

/// Bytes of live state a value carries between time steps or layers.
pub trait StateFootprint {
    fn state_bytes(&self) -> usize;
}

/// Dense binary spike record, `neurons` rows by `timesteps` columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeMatrix {
    neurons: usize,
    timesteps: usize,
    data: Vec<u8>,
}

impl SpikeMatrix {
    /// Builds a matrix from row-major `data`; every element must be 0 or 1.
    pub fn new(neurons: usize, timesteps: usize, data: Vec<u8>) -> Result<Self> {
        if neurons == 0 || timesteps == 0 {
            return Err(Error::Shape(format!(
                "spike matrix must be non-empty, got {neurons}x{timesteps}"
            )));
        }
        if data.len() != neurons * timesteps {
            return Err(Error::Shape(format!(
                "expected {} elements for {neurons}x{timesteps}, got {}",
                neurons * timesteps,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&s| s > 1) {
            return Err(Error::Domain(format!("spike value {bad} is not binary")));
        }
        Ok(Self {
            neurons,
            timesteps,
            data,
        })
    }

    pub fn zeros(neurons: usize, timesteps: usize) -> Result<Self> {
        Self::new(neurons, timesteps, vec![0; neurons * timesteps])
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    /// Spike of neuron `n` at 0-based step `t`.
    pub fn get(&self, n: usize, t: usize) -> u8 {
        self.data[n * self.timesteps + t]
    }

    pub fn set(&mut self, n: usize, t: usize, spike: bool) {
        self.data[n * self.timesteps + t] = spike as u8;
    }

    pub fn row(&self, n: usize) -> &[u8] {
        &self.data[n * self.timesteps..(n + 1) * self.timesteps]
    }

    /// Column of spikes across all neurons at 0-based step `t`.
    pub fn column(&self, t: usize) -> Vec<u8> {
        (0..self.neurons).map(|n| self.get(n, t)).collect()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn spike_count(&self) -> usize {
        self.data.iter().map(|&s| s as usize).sum()
    }

    pub fn firing_rate(&self) -> f64 {
        self.spike_count() as f64 / (self.neurons * self.timesteps) as f64
    }
}

impl StateFootprint for SpikeMatrix {
    fn state_bytes(&self) -> usize {
        std::mem::size_of_val(self.data.as_slice())
    }
}

/// Weights `q_t = tau^(T - t)` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalWeights {
    q: Vec<f64>,
}

impl TemporalWeights {
    pub fn new(tau: f64, timesteps: usize) -> Result<Self> {
        check_tau(tau)?;
        check_timesteps(timesteps, usize::MAX)?;
        let q = (1..=timesteps)
            .map(|t| tau.powi((timesteps - t) as i32))
            .collect();
        Ok(Self { q })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    /// `sum_t q_t`, the value of an all-ones train.
    pub fn sum(&self) -> f64 {
        self.q.iter().sum()
    }
}

/// One packed spike word per neuron plus the `(T, tau)` needed to read it.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedSpikes {
    words: Vec<u64>,
    timesteps: usize,
    tau: f64,
}

impl PackedSpikes {
    pub fn from_words(words: Vec<u64>, timesteps: usize, tau: f64) -> Result<Self> {
        check_timesteps(timesteps, MAX_TIMESTEPS)?;
        check_tau(tau)?;
        let mask = word_mask(timesteps);
        if let Some(w) = words.iter().find(|&&w| w & !mask != 0) {
            return Err(Error::Domain(format!(
                "word {w:#x} has bits above position {}",
                timesteps - 1
            )));
        }
        Ok(Self {
            words,
            timesteps,
            tau,
        })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn neurons(&self) -> usize {
        self.words.len()
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Spike of neuron `n` at 0-based step `t`.
    pub fn spike(&self, n: usize, t: usize) -> bool {
        (self.words[n] >> (self.timesteps - 1 - t)) & 1 == 1
    }

    pub fn spike_count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// `popcount / (neurons * T)`; zero for an empty tensor.
    pub fn firing_rate(&self) -> f64 {
        if self.words.is_empty() {
            return 0.0;
        }
        self.spike_count() as f64 / (self.words.len() * self.timesteps) as f64
    }

    /// Serializes as `N: u32, T: u8, tau: f64` followed by `N` words, all little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let n = u32::try_from(self.words.len())
            .map_err(|_| Error::Shape("too many neurons for u32 header".into()))?;
        w.write_u32::<LittleEndian>(n)?;
        w.write_u8(self.timesteps as u8)?;
        w.write_f64::<LittleEndian>(self.tau)?;
        for &word in &self.words {
            w.write_u64::<LittleEndian>(word)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let n = r.read_u32::<LittleEndian>()? as usize;
        let timesteps = r.read_u8()? as usize;
        let tau = r.read_f64::<LittleEndian>()?;
        let mut words = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            words.push(r.read_u64::<LittleEndian>()?);
        }
        Self::from_words(words, timesteps, tau).map_err(|e| Error::Corrupt(e.to_string()))
    }
}

impl StateFootprint for PackedSpikes {
    fn state_bytes(&self) -> usize {
        std::mem::size_of_val(self.words.as_slice())
    }
}

/// Writes consecutive `PackedSpikes` records.
pub fn write_stream<W: Write>(mut w: W, records: &[PackedSpikes]) -> Result<()> {
    for rec in records {
        rec.write_to(&mut w)?;
    }
    Ok(())
}

/// Reads records until a clean end of input.
pub fn read_stream<R: Read>(mut r: R) -> Result<Vec<PackedSpikes>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cursor = std::io::Cursor::new(bytes.as_slice());
    let mut out = Vec::new();
    while (cursor.position() as usize) < bytes.len() {
        out.push(PackedSpikes::read_from(&mut cursor).map_err(|e| match e {
            Error::Io(io) => Error::Corrupt(format!("truncated spike stream: {io}")),
            other => other,
        })?);
    }
    Ok(out)
}

/// Packs each row of `spikes` into a word. `evaluate` of the result equals `S q`.
pub fn pack(spikes: &SpikeMatrix, tau: f64) -> Result<PackedSpikes> {
    let t_len = spikes.timesteps();
    check_timesteps(t_len, MAX_TIMESTEPS)?;
    check_tau(tau)?;
    let words = (0..spikes.neurons())
        .map(|n| {
            spikes
                .row(n)
                .iter()
                .fold(0u64, |acc, &s| (acc << 1) | s as u64)
        })
        .collect();
    Ok(PackedSpikes {
        words,
        timesteps: t_len,
        tau,
    })
}

pub fn unpack(packed: &PackedSpikes) -> SpikeMatrix {
    let t_len = packed.timesteps;
    let mut data = Vec::with_capacity(packed.words.len() * t_len);
    for &word in &packed.words {
        data.extend((0..t_len).map(|t| ((word >> (t_len - 1 - t)) & 1) as u8));
    }
    SpikeMatrix {
        neurons: packed.words.len(),
        timesteps: t_len,
        data,
    }
}

/// `sum_t s_{n,t} tau^(T-t)` per neuron.
pub fn evaluate(packed: &PackedSpikes) -> Vec<f64> {
    packed
        .words
        .iter()
        .map(|&w| word_value(w, packed.timesteps, packed.tau))
        .collect()
}

/// Weighted value of a single word, by Horner's rule from the first step.
/// Exact for `tau = 2` whenever `T <= 53`.
pub fn word_value(word: u64, timesteps: usize, tau: f64) -> f64 {
    if tau == 2.0 {
        return word as f64;
    }
    (0..timesteps).fold(0.0, |acc, t| {
        acc * tau + ((word >> (timesteps - 1 - t)) & 1) as f64
    })
}

pub fn word_mask(timesteps: usize) -> u64 {
    if timesteps >= 64 {
        u64::MAX
    } else {
        (1u64 << timesteps) - 1
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 1.0) {
        return Err(invalid("tau", format!("must be a finite value > 1, got {tau}")));
    }
    Ok(())
}

pub(crate) fn check_timesteps(timesteps: usize, max: usize) -> Result<()> {
    if timesteps == 0 || timesteps > max {
        return Err(Error::Shape(format!(
            "time steps must lie in 1..={max}, got {timesteps}"
        )));
    }
    Ok(())
}
