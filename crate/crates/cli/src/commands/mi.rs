//! Mutual-information sweep over the (N, T) grid.

use std::path::Path;

use serde::Serialize;
use spikepack_core::info_metrics::{mi_row, MiExperimentConfig, MiModel, MiRow, ThetaRule};

use super::write_table;
use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
struct ComparisonRow {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "T")]
    timesteps: usize,
    spikepack_analytic: f64,
    spikepack_mc: f64,
    lif_bound: f64,
    lif_mc: f64,
    spikepack_exceeds_lif: bool,
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let c = &cfg.mi;
    if c.samples == 0 {
        return Err(CliError::Usage("--samples must be >= 1".into()));
    }
    if c.n.is_empty() || c.timesteps.is_empty() {
        return Err(CliError::Usage("the N and T grids must be nonempty".into()));
    }
    let mut rows: Vec<MiRow> = Vec::new();
    let mut table = Vec::new();
    for &n in &c.n {
        for &t in &c.timesteps {
            let exp = MiExperimentConfig {
                n,
                timesteps: t,
                p: c.p,
                sigma2: c.sigma2,
                tau: c.tau,
                theta_rule: c.theta.map_or(ThetaRule::SixSigma, ThetaRule::Explicit),
                samples: c.samples,
                seed: cfg.seed,
                lif_theta: c.lif_theta,
                stderr_tolerance: c.stderr_tolerance,
            };
            exp.validate()?;
            let sp = mi_row(&exp, MiModel::Spikepack)?;
            let lif = mi_row(&exp, MiModel::Lif)?;
            for r in [&sp, &lif] {
                if r.flag != "ok" {
                    eprintln!(
                        "warning: N={n} T={t} {}: standard error {:.4} exceeds {} bits; raise --samples",
                        r.model, r.mc_stderr, c.stderr_tolerance
                    );
                }
            }
            table.push(ComparisonRow {
                n,
                timesteps: t,
                spikepack_analytic: sp.analytic_bits,
                spikepack_mc: sp.mc_bits,
                lif_bound: lif.analytic_bits,
                lif_mc: lif.mc_bits,
                spikepack_exceeds_lif: sp.mc_bits > lif.mc_bits,
            });
            rows.push(sp);
            rows.push(lif);
        }
    }
    write_table(out, "mi", &rows, cfg.format)?;
    write_table(out, "mi_comparison", &table, cfg.format)?;
    println!("{:>4} {:>4} {:>12} {:>10} {:>10} {:>10}", "N", "T", "SP analytic", "SP MC", "LIF bound", "LIF MC");
    for r in &table {
        println!(
            "{:>4} {:>4} {:>12.3} {:>10.3} {:>10.3} {:>10.3}",
            r.n, r.timesteps, r.spikepack_analytic, r.spikepack_mc, r.lif_bound, r.lif_mc
        );
    }
    let losing: Vec<String> = table
        .iter()
        .filter(|r| !r.spikepack_exceeds_lif)
        .map(|r| format!("N={} T={}", r.n, r.timesteps))
        .collect();
    if !losing.is_empty() {
        return Err(CliError::Property(format!("SpikePack MC MI not above LIF at {}", losing.join(", "))));
    }
    Ok(())
}
