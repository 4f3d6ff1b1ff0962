//! Cycle and energy estimates for SpikePack and LIF execution.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::Serialize;
use spikepack_core::container::{load_model, Model};
use spikepack_core::converter::{calibrate, convert, spikepack_to_lif};
use spikepack_core::network::NetworkSpec;
use spikepack_core::neurosim::{
    simulate_layer_stats, simulate_network_sparsified, LayerActivity, LayerSimStats, NeuronKind, SimTrace,
};
use spikepack_core::spike_tensor::read_stream;

use super::{load_data, train_toy_ann, write_json, write_table};
use crate::config::{ConvertConfig, RunConfig, SimKind};
use crate::CliError;

/// Window length of the built-in converted network.
const TOY_TIMESTEPS: usize = 8;

#[derive(Debug, Serialize)]
struct SimRow {
    kind: &'static str,
    #[serde(rename = "T")]
    timesteps: usize,
    drop_fraction: f64,
    samples: usize,
    total_cycles: u64,
    latency_seconds: f64,
    energy_joules: f64,
}

fn kind_name(kind: NeuronKind) -> &'static str {
    match kind {
        NeuronKind::Lif => "lif",
        NeuronKind::Spikepack => "spikepack",
    }
}

fn toy_network(seed: u64) -> Result<NetworkSpec, CliError> {
    let c = ConvertConfig::default();
    let train = load_data(&c.data, c.samples, seed)?;
    let ann = train_toy_ann(&c, &train, seed)?;
    let calib = train.calibration_split(c.calib_fraction, None);
    let report = calibrate(&ann, &calib.features, TOY_TIMESTEPS, c.tau, c.percentile)?;
    Ok(convert(&ann, &report, TOY_TIMESTEPS, c.tau)?)
}

fn replay(net: &NetworkSpec, path: &Path, layer: usize, cfg: &RunConfig, kind: NeuronKind) -> Result<SimTrace, CliError> {
    let hw = &cfg.simulate.hardware;
    if layer >= net.layers.len() {
        return Err(CliError::Usage(format!("--layer {layer} out of range ({} layers)", net.layers.len())));
    }
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let records = read_stream(BufReader::new(file))?;
    if records.is_empty() {
        return Err(CliError::Io(format!("{}: stream holds no records", path.display())));
    }
    let mut total = LayerSimStats::default();
    for r in &records {
        let st = simulate_layer_stats(LayerActivity::Packed(r), &net.layers[layer], r.timesteps(), hw, kind)?;
        total.add(&st);
    }
    Ok(SimTrace::from_layers(kind, records.len(), vec![total], hw))
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let c = &cfg.simulate;
    c.hardware.validate()?;
    if c.sparsity.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(CliError::Usage("sparsity fractions must lie in [0, 1]".into()));
    }
    let net = match &c.model {
        Some(path) => match load_model(path)? {
            Model::Snn(n) => n,
            Model::Ann(_) => return Err(CliError::Usage(format!("{}: expected a converted SNN", path.display()))),
        },
        None => toy_network(cfg.seed)?,
    };
    let mut nets: Vec<(NeuronKind, NetworkSpec)> = Vec::new();
    if matches!(c.kind, SimKind::Both | SimKind::Spikepack) {
        nets.push((NeuronKind::Spikepack, net.clone()));
    }
    if matches!(c.kind, SimKind::Both | SimKind::Lif) {
        nets.push((NeuronKind::Lif, spikepack_to_lif(&net, c.lif_timesteps, c.lif_leak)?));
    }

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    if let Some(path) = &c.trace {
        for (kind, n) in &nets {
            let tr = replay(n, path, c.layer, cfg, *kind)?;
            rows.push(SimRow {
                kind: kind_name(*kind),
                timesteps: n.timesteps,
                drop_fraction: 0.0,
                samples: tr.samples,
                total_cycles: tr.total_cycles,
                latency_seconds: tr.latency_seconds,
                energy_joules: tr.energy_joules,
            });
            traces.push(tr);
        }
    } else {
        let data = load_data(&c.data, c.samples, cfg.seed.wrapping_add(1))?;
        if data.feature_len() != net.input_len() {
            return Err(CliError::Usage(format!(
                "model expects {} features, data has {}",
                net.input_len(),
                data.feature_len()
            )));
        }
        let sweep: &[f64] = if c.sparsity.is_empty() { &[0.0] } else { &c.sparsity };
        for (kind, n) in &nets {
            for &f in sweep {
                let tr = simulate_network_sparsified(n, &data.features, &c.hardware, *kind, f, cfg.seed)?;
                println!(
                    "{:>9} T={:>2} drop {:.2}: {} cycles, {:.3e} J",
                    kind_name(*kind),
                    n.timesteps,
                    f,
                    tr.total_cycles,
                    tr.energy_joules
                );
                rows.push(SimRow {
                    kind: kind_name(*kind),
                    timesteps: n.timesteps,
                    drop_fraction: f,
                    samples: tr.samples,
                    total_cycles: tr.total_cycles,
                    latency_seconds: tr.latency_seconds,
                    energy_joules: tr.energy_joules,
                });
                traces.push(tr);
            }
        }
    }
    write_json(&out.join("sim.json"), &traces)?;
    write_table(out, "sim", &rows, cfg.format)?;
    Ok(())
}
