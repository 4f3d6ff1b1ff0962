//! SpikePack spiking neurons and the tooling around them.
//!
//! - [`spike_tensor`]: bit-packed spike trains and their serialization
//! - [`neurons`]: LIF reference, SpikePack serial decoder and parallel quantizer
//! - [`network`]: feed-forward SNN engine working on packed spikes
//! - [`training`]: straight-through gradient and a small SGD trainer
//! - [`converter`]: ReLU ANN definition, per-channel calibration and conversion
//! - [`info_metrics`]: analytic and Monte Carlo mutual information, SOP
//! - [`neurosim`]: event-driven processor latency/energy model
//! - [`container`], [`dataset`]: on-disk formats

pub mod container;
pub mod converter;
pub mod dataset;
pub mod error;
pub mod info_metrics;
pub mod network;
pub mod neurons;
pub mod neurosim;
pub mod spike_tensor;
pub mod training;

pub use error::{Error, Result};
