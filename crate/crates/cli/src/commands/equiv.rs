//! Serial/parallel equivalence and round-trip suites.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use spikepack_core::neurons::{spikepack_decode_serial, spikepack_quantize_parallel, NeuronConfig};
use spikepack_core::spike_tensor::{evaluate, word_mask, word_value, MAX_TIMESTEPS};

use super::write_table;
use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
struct SuiteRow {
    suite: &'static str,
    cases: usize,
    mismatches: usize,
}

#[derive(Debug, Serialize)]
struct Counterexample {
    suite: &'static str,
    tau: f64,
    timesteps: usize,
    theta: f64,
    v_g: f64,
    expected: f64,
    got: f64,
}

const ROUNDTRIP_THETAS: [f64; 4] = [1.0, 0.1, 0.37, 3.0];

pub fn run(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let c = &cfg.equiv;
    if c.cases == 0 {
        return Err(CliError::Usage("--cases must be >= 1".into()));
    }
    if c.taus.is_empty() {
        return Err(CliError::Usage("at least one tau is required".into()));
    }
    if !(1..=MAX_TIMESTEPS).contains(&c.max_timesteps) {
        return Err(CliError::Usage(format!("--max-timesteps must lie in 1..={MAX_TIMESTEPS}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut examples = Vec::new();

    let mut serial_bad = 0;
    for _ in 0..c.cases {
        let tau = c.taus[rng.random_range(0..c.taus.len())];
        let t = rng.random_range(1..=c.max_timesteps);
        let theta = 10f64.powf(rng.random_range(-2.0..1.0));
        let ncfg = NeuronConfig::new(tau, theta, t)?.comparator(c.comparator).rounding(c.rounding);
        let full = (0..t).map(|k| tau.powi(k as i32)).sum::<f64>();
        // One case in five sits exactly on a representable level.
        let v = if rng.random_bool(0.2) {
            word_value(rng.random::<u64>() & word_mask(t), t, tau) * theta
        } else {
            rng.random_range(-0.5..full * 1.1) * theta
        };
        let serial = spikepack_decode_serial(&[v], &ncfg)?.words()[0];
        let parallel = spikepack_quantize_parallel(&[v], &ncfg)?.words()[0];
        if serial != parallel {
            serial_bad += 1;
            if examples.len() < c.max_counterexamples {
                examples.push(Counterexample {
                    suite: "serial-parallel",
                    tau,
                    timesteps: t,
                    theta,
                    v_g: v,
                    expected: serial as f64,
                    got: parallel as f64,
                });
            }
        }
    }

    let mut rows = vec![SuiteRow {
        suite: "serial-parallel",
        cases: c.cases,
        mismatches: serial_bad,
    }];
    if c.taus.contains(&2.0) {
        let (cases, bad) = roundtrip(cfg, &mut rng, &mut examples)?;
        rows.push(SuiteRow {
            suite: if c.exhaustive_roundtrip { "roundtrip-exhaustive" } else { "roundtrip-sampled" },
            cases,
            mismatches: bad,
        });
    }
    write_table(out, "equiv", &rows, cfg.format)?;
    write_table(out, "equiv_counterexamples", &examples, cfg.format)?;
    for r in &rows {
        println!("{}: {} mismatches / {} cases", r.suite, r.mismatches, r.cases);
    }
    let total: usize = rows.iter().map(|r| r.mismatches).sum();
    if total > 0 {
        return Err(CliError::Property(format!("{total} mismatching cases")));
    }
    Ok(())
}

/// `quantize(k θ)` must decode back to `k` for τ = 2.
fn roundtrip(cfg: &RunConfig, rng: &mut ChaCha8Rng, examples: &mut Vec<Counterexample>) -> Result<(usize, usize), CliError> {
    let c = &cfg.equiv;
    let (mut cases, mut bad) = (0, 0);
    for t in 1..=c.roundtrip_max_timesteps.min(c.max_timesteps) {
        let top = word_mask(t);
        for theta in ROUNDTRIP_THETAS {
            let ks: Vec<u64> = if c.exhaustive_roundtrip {
                (0..=top).collect()
            } else {
                (0..256).map(|_| rng.random_range(0..=top)).collect()
            };
            let ncfg = NeuronConfig::new(2.0, theta, t)?.comparator(c.comparator).rounding(c.rounding);
            let v: Vec<f64> = ks.iter().map(|&k| k as f64 * theta).collect();
            let decoded = evaluate(&spikepack_quantize_parallel(&v, &ncfg)?);
            for (&k, d) in ks.iter().zip(decoded) {
                cases += 1;
                if d != k as f64 {
                    bad += 1;
                    if examples.len() < c.max_counterexamples {
                        examples.push(Counterexample {
                            suite: "roundtrip",
                            tau: 2.0,
                            timesteps: t,
                            theta,
                            v_g: k as f64 * theta,
                            expected: k as f64,
                            got: d,
                        });
                    }
                }
            }
        }
    }
    Ok((cases, bad))
}
