//! Workspace acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikepack_core::converter::{ann_accuracy, calibrate, convert, spikepack_to_lif, train_ann, AnnModel};
use spikepack_core::dataset::{swirl3, Dataset};
use spikepack_core::info_metrics::{
    analytic_mi_lif_bound, analytic_mi_spikepack, monte_carlo_mi, sop, MiExperimentConfig, MiModel,
};
use spikepack_core::network::{
    accuracy, argmax, layer_forward, lif_network_forward, lif_layer_forward, Conv2dGeometry, LayerInput, LayerShape, LayerSpec, LifInput,
    NetworkSpec,
};
use spikepack_core::neurons::{spikepack_decode_serial, spikepack_quantize_parallel, NeuronConfig};
use spikepack_core::neurosim::{simulate_network, simulate_network_sparsified, NeuronKind, SimConfig};
use spikepack_core::spike_tensor::{evaluate, pack, word_mask, word_value, SpikeMatrix, StateFootprint};
use spikepack_core::training::{backward, forward_with_tape, relaxed_forward, ForwardMode, TrainHyper};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- 1

fn serial_parallel_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let taus = [1.5, 2.0, 3.0];
    let cases = 100_000;
    let mut mismatches = 0;
    for _ in 0..cases {
        let tau = taus[rng.random_range(0..3)];
        let t = rng.random_range(1..=16);
        let theta = 10f64.powf(rng.random_range(-2.0..1.0));
        let cfg = NeuronConfig::new(tau, theta, t).unwrap();
        let full: f64 = (0..t).map(|k| tau.powi(k as i32)).sum();
        let v = if rng.random_bool(0.2) {
            word_value(rng.random::<u64>() & word_mask(t), t, tau) * theta
        } else {
            rng.random_range(-0.5..full * 1.1) * theta
        };
        let s = spikepack_decode_serial(&[v], &cfg).unwrap().words()[0];
        let p = spikepack_quantize_parallel(&[v], &cfg).unwrap().words()[0];
        mismatches += usize::from(s != p);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 10.0,
        format!("{mismatches} mismatches in {cases} cases, {secs:.2} s"),
    )
}

// ---------------------------------------------------------------- 2

fn round_trip_exactness() -> Outcome {
    let mut failures = 0usize;
    let mut checked = 0usize;
    for theta in [1.0, 0.1, 0.37] {
        for t in 1..=12usize {
            let cfg = NeuronConfig::new(2.0, theta, t).unwrap();
            let v: Vec<f64> = (0..1u64 << t).map(|k| k as f64 * theta).collect();
            let packed = spikepack_quantize_parallel(&v, &cfg).unwrap();
            for (k, (&w, e)) in packed.words().iter().zip(evaluate(&packed)).enumerate() {
                checked += 1;
                if w != k as u64 || e != k as f64 {
                    failures += 1;
                }
            }
        }
    }
    outcome(failures == 0, format!("{failures} failures over {checked} levels (T<=12, three thresholds)"))
}

// ---------------------------------------------------------------- 3

fn reference_information_values() -> Outcome {
    let start = Instant::now();
    let cfg = MiExperimentConfig::default();
    let isp = analytic_mi_spikepack(&cfg).unwrap();
    // theta / sigma' = 0.5 with sigma'^2 = sigma^2 N p (1 - p)
    let sigma_prime = (cfg.sigma2 * cfg.n as f64 * cfg.p * (1.0 - cfg.p)).sqrt();
    let bound = analytic_mi_lif_bound(&cfg, 0.5 * sigma_prime);
    let mc = monte_carlo_mi(&cfg, MiModel::Spikepack).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok_isp = (isp - 15.21).abs() <= 0.01;
    let ok_bound = (bound - 14.096).abs() <= 0.02;
    let ok_mc = (mc.bits - isp).abs() <= 0.15;
    let mark = |b: bool| if b { "ok" } else { "out of tolerance" };
    outcome(
        ok_isp && ok_bound && ok_mc && secs < 120.0,
        format!(
            "I_SP {isp:.4} ({}); LIF bound {bound:.4} vs 14.096 +/- 0.02 ({}); \
             MC {:.4} +/- {:.4} at {} samples vs analytic +/- 0.15 ({}); {secs:.1} s",
            mark(ok_isp),
            mark(ok_bound),
            mc.bits,
            mc.stderr,
            mc.samples,
            mark(ok_mc)
        ),
    )
}

// ---------------------------------------------------------------- 4

fn grid_ordering() -> Outcome {
    let start = Instant::now();
    let mut losing = Vec::new();
    let mut margin = f64::INFINITY;
    for n in [4, 8, 16] {
        for t in [4, 8, 16] {
            let cfg = MiExperimentConfig {
                n,
                timesteps: t,
                ..MiExperimentConfig::default()
            };
            let sp = monte_carlo_mi(&cfg, MiModel::Spikepack).unwrap().bits;
            let lif = monte_carlo_mi(&cfg, MiModel::Lif).unwrap().bits;
            margin = margin.min(sp - lif);
            if sp <= lif {
                losing.push(format!("N={n} T={t}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        losing.is_empty() && secs < 300.0,
        format!(
            "SpikePack above LIF at {}/9 points, smallest margin {margin:.3} bits, {secs:.1} s{}",
            9 - losing.len(),
            if losing.is_empty() { String::new() } else { format!("; not above at {}", losing.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------- 5

struct ToyConversion {
    nets: BTreeMap<usize, NetworkSpec>,
    test: Dataset,
    ann_accuracy: f64,
    snn_accuracy: BTreeMap<usize, f64>,
    seconds: f64,
}

fn toy_conversion() -> ToyConversion {
    let start = Instant::now();
    let seed = 7;
    let train = swirl3(10_000, seed);
    let test = swirl3(2000, seed + 1);
    let init = AnnModel::mlp(&[2, 64, 64, 3], seed).unwrap();
    let hyper = TrainHyper {
        lr: 0.1,
        epochs: 30,
        batch: 32,
        seed,
    };
    let (ann, _) = train_ann(&init, &train, &hyper).unwrap();
    let ann_acc = ann_accuracy(&ann, &test).unwrap();
    let calib = train.calibration_split(0.1, None);
    let mut nets = BTreeMap::new();
    let mut snn_accuracy = BTreeMap::new();
    for t in [2usize, 4, 6, 8] {
        let report = calibrate(&ann, &calib.features, t, 2.0, 99.9).unwrap();
        let net = convert(&ann, &report, t, 2.0).unwrap();
        snn_accuracy.insert(t, accuracy(&net, &test.features, &test.labels).unwrap());
        nets.insert(t, net);
    }
    ToyConversion {
        nets,
        test,
        ann_accuracy: ann_acc,
        snn_accuracy,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn conversion_fidelity(toy: &ToyConversion) -> Outcome {
    let accs: Vec<f64> = toy.snn_accuracy.values().copied().collect();
    let monotone = accs.windows(2).all(|w| w[1] >= w[0]);
    let gap = (toy.ann_accuracy - toy.snn_accuracy[&8]).abs();
    let listing: Vec<String> = toy.snn_accuracy.iter().map(|(t, a)| format!("T{t}={a:.4}")).collect();
    outcome(
        toy.ann_accuracy >= 0.97 && monotone && gap < 0.01 && toy.seconds < 120.0,
        format!(
            "ANN {:.4}; SNN {}; |gap| at T=8 {gap:.4}; {:.1} s",
            toy.ann_accuracy,
            listing.join(" "),
            toy.seconds
        ),
    )
}

// ---------------------------------------------------------------- 6

fn random_layer(rng: &mut ChaCha8Rng, shape: LayerShape, hidden: bool, scale: Option<Vec<f64>>) -> LayerSpec {
    let w = (0..shape.weight_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = (0..shape.out_channels()).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut layer = LayerSpec::new(shape, w, b).unwrap();
    if hidden {
        layer.theta_out = (0..layer.shape.out_channels()).map(|_| rng.random_range(0.05..2.0)).collect();
    }
    if let Some(s) = scale {
        layer.input_scale = s;
    }
    layer
}

fn random_net(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let first = if rng.random_bool(0.4) {
        LayerShape::Conv2d(Conv2dGeometry {
            in_channels: rng.random_range(1..=2),
            in_height: 4,
            in_width: 4,
            out_channels: rng.random_range(1..=3),
            kernel_h: 3,
            kernel_w: 3,
            stride: rng.random_range(1..=2),
            padding: rng.random_range(0..=1),
        })
    } else {
        LayerShape::Dense {
            inputs: rng.random_range(2..=6),
            outputs: rng.random_range(2..=6),
        }
    };
    let mut layers = vec![random_layer(rng, first, true, None)];
    let depth = rng.random_range(2..=3);
    for l in 1..depth {
        let prev = &layers[l - 1];
        let inputs = prev.output_len();
        let spatial = prev.shape.out_spatial();
        let scale: Vec<f64> = (0..inputs).map(|i| prev.theta_out[i / spatial]).collect();
        let outputs = if l + 1 == depth { 3 } else { rng.random_range(2..=5) };
        layers.push(random_layer(rng, LayerShape::Dense { inputs, outputs }, l + 1 < depth, Some(scale)));
    }
    NetworkSpec::new(layers, 8, 2.0).unwrap()
}

fn smooth_loss(z: &[f64], c: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + z.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()
}

fn smooth_loss_grad(z: &[f64], c: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().zip(c).map(|(e, c)| e / s + c).collect()
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut params = 0usize;
    let loss = |net: &NetworkSpec, x: &[f64], c: &[f64]| smooth_loss(&relaxed_forward(x, net).unwrap(), c);
    let rel = |a: f64, f: f64| (a - f).abs() / a.abs().max(f.abs()).max(1e-6);
    for _ in 0..100 {
        let net = random_net(&mut rng);
        let x: Vec<f64> = (0..net.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..net.output_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tape = forward_with_tape(&x, &net, ForwardMode::Relaxed).unwrap();
        let g = backward(&smooth_loss_grad(tape.logits(), &c), &tape, &net).unwrap();
        for l in 0..net.layers.len() {
            for k in 0..net.layers[l].weights.len() {
                let (mut p, mut m) = (net.clone(), net.clone());
                p.layers[l].weights[k] += h;
                m.layers[l].weights[k] -= h;
                let fd = (loss(&p, &x, &c) - loss(&m, &x, &c)) / (2.0 * h);
                worst = worst.max(rel(g.weights[l][k], fd));
                params += 1;
            }
            for k in 0..net.layers[l].bias.len() {
                let (mut p, mut m) = (net.clone(), net.clone());
                p.layers[l].bias[k] += h;
                m.layers[l].bias[k] -= h;
                let fd = (loss(&p, &x, &c) - loss(&m, &x, &c)) / (2.0 * h);
                worst = worst.max(rel(g.bias[l][k], fd));
                params += 1;
            }
        }
    }
    outcome(worst < 1e-5, format!("max relative error {worst:.2e} over {params} parameters in 100 networks"))
}

// ---------------------------------------------------------------- 7

/// Least-squares slope and coefficient of determination.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 0.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

fn state_footprint() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n_in, n_out) = (32, 16);
    let w = (0..n_in * n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut layer = LayerSpec::new(LayerShape::Dense { inputs: n_in, outputs: n_out }, w, vec![0.0; n_out]).unwrap();
    layer.theta_out = vec![0.5; n_out];
    let ts = [4usize, 8, 16, 32, 64];
    let mut sp = Vec::new();
    let mut lif = Vec::new();
    for &t in &ts {
        let bits: Vec<u8> = (0..n_in * t).map(|_| u8::from(rng.random_bool(0.3))).collect();
        let s = SpikeMatrix::new(n_in, t, bits).unwrap();
        let packed = pack(&s, 2.0).unwrap();
        let cfg = NeuronConfig::new(2.0, 1.0, t).unwrap();
        let out = layer_forward(LayerInput::Packed(&packed), &layer, &cfg).unwrap();
        sp.push((packed.state_bytes() + out.state_bytes()) as f64);
        let (rec, state) = lif_layer_forward(LifInput::Spikes(&s), &layer, t, 2.0).unwrap();
        lif.push((s.state_bytes() + rec.state_bytes() + state.state_bytes()) as f64);
    }
    let constant = sp.windows(2).all(|w| w[0] == w[1]);
    let x: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
    let (slope, r2) = linear_fit(&x, &lif);
    outcome(
        constant && slope > 0.0 && r2 > 0.99,
        format!("SpikePack bytes {sp:?}; LIF bytes {lif:?}, slope {slope:.1} B/step, R^2 {r2:.5}"),
    )
}

// ---------------------------------------------------------------- 8

fn simulator_direction(toy: &ToyConversion) -> Outcome {
    let start = Instant::now();
    let net = &toy.nets[&8];
    let lif = spikepack_to_lif(net, 16, 1.01).unwrap();
    let batch = &toy.test.features[..200];
    let hw = SimConfig::default();
    let sp_trace = simulate_network(net, batch, &hw, NeuronKind::Spikepack).unwrap();
    let lif_trace = simulate_network(&lif, batch, &hw, NeuronKind::Lif).unwrap();
    let labels = &toy.test.labels[..200];
    let sp_acc = accuracy(net, batch, labels).unwrap();
    let lif_correct = batch
        .iter()
        .zip(labels)
        .filter(|(x, &y)| argmax(&lif_network_forward(x, &lif).unwrap().logits) == y)
        .count();
    let lif_acc = lif_correct as f64 / batch.len() as f64;
    let faster = sp_trace.latency_seconds < lif_trace.latency_seconds;
    let cheaper = sp_trace.energy_joules < lif_trace.energy_joules;
    let mut latencies = Vec::new();
    for f in [0.0, 0.2, 0.4, 0.6, 0.8] {
        let tr = simulate_network_sparsified(net, batch, &hw, NeuronKind::Spikepack, f, 3).unwrap();
        latencies.push(tr.latency_seconds);
    }
    let monotone = latencies.windows(2).all(|w| w[1] <= w[0]);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        faster && cheaper && monotone && secs < 60.0,
        format!(
            "SpikePack T=8 (acc {sp_acc:.3}) {:.3e} s / {:.3e} J vs LIF T=16 (acc {lif_acc:.3}) {:.3e} s / {:.3e} J; sparsity sweep latencies {:?}; {secs:.1} s",
            sp_trace.latency_seconds,
            sp_trace.energy_joules,
            lif_trace.latency_seconds,
            lif_trace.energy_joules,
            latencies.iter().map(|l| format!("{l:.3e}")).collect::<Vec<_>>()
        ),
    )
}

// ---------------------------------------------------------------- 9

fn sop_fixtures() -> Outcome {
    let fixtures = [(0.25, 1e9, 4, 1e9), (0.0, 5e6, 8, 0.0), (1.0, 123_456.0, 1, 123_456.0)];
    let mut bad = Vec::new();
    for (fr, flops, t, want) in fixtures {
        let got = sop(fr, flops, t).unwrap();
        if got != want {
            bad.push(format!("sop({fr}, {flops}, {t}) = {got}, expected {want}"));
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { "3/3 fixtures exact".into() } else { bad.join("; ") })
}

// ---------------------------------------------------------------- 10

const DETERMINISM_CONFIG: &str = r#"
seed = 11

[equiv]
cases = 20000

[mi]
n = [4, 8]
timesteps = [4]
samples = 20000

[train]
samples = 200
epochs = 10

[convert]
samples = 2000
test_samples = 400
hidden = [32]
epochs = 5
timesteps = [2, 4]

[infer]
samples = 300

[simulate]
samples = 40
sparsity = [0.0, 0.5]
"#;

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap());
        }
    }
    files
}

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["spikepack"];
    argv.extend_from_slice(args);
    spikepack_cli::run(argv)
}

fn cli_determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let base = root.path().join("base");
    let cfg_path = root.path().join("run.toml");
    // infer and simulate need a model; make one first with the same config.
    let text = DETERMINISM_CONFIG.to_string();
    let base_s = base.to_str().unwrap();
    if cli(&["--config", write_cfg(&cfg_path, &text), "--out", base_s, "convert"]) != 0 {
        return outcome(false, "could not build the model for infer/simulate".into());
    }
    let model = base.join("snn_T4.spkn");
    let text = text
        .replace("[infer]\n", &format!("[infer]\nmodel = {:?}\n", model.to_str().unwrap()))
        .replace("[simulate]\n", &format!("[simulate]\nmodel = {:?}\n", model.to_str().unwrap()))
        + &format!("\n[report]\ndir = {:?}\n", base_s);
    let cfg = write_cfg(&cfg_path, &text);

    let mut differing = Vec::new();
    for sub in ["equiv", "mi", "train", "convert", "infer", "simulate", "report"] {
        let a = root.path().join(format!("{sub}_a"));
        let b = root.path().join(format!("{sub}_b"));
        let ca = cli(&["--config", cfg, "--out", a.to_str().unwrap(), sub]);
        let cb = cli(&["--config", cfg, "--out", b.to_str().unwrap(), sub]);
        let (fa, fb) = (dir_contents(&a), dir_contents(&b));
        if ca != cb || fa != fb || fa.is_empty() {
            differing.push(format!("{sub} (exit {ca}/{cb})"));
        }
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            "7/7 subcommands byte-identical across two runs".into()
        } else {
            format!("outputs differ for {}", differing.join(", "))
        },
    )
}

fn write_cfg<'a>(path: &'a Path, text: &str) -> &'a str {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap()
}

// ----------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        let mut err = std::io::stderr();
        let _ = writeln!(err, "criterion {n:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "serial/parallel equivalence", guarded(serial_parallel_equivalence));
    report(2, "round-trip exactness", guarded(round_trip_exactness));
    report(3, "reference information values", guarded(reference_information_values));
    report(4, "mutual-information ordering", guarded(grid_ordering));
    let toy = catch_unwind(toy_conversion).ok();
    match &toy {
        Some(t) => report(5, "conversion fidelity", guarded(|| conversion_fidelity(t))),
        None => report(5, "conversion fidelity", outcome(false, "toy conversion panicked".into())),
    }
    report(6, "gradient correctness", guarded(gradient_correctness));
    report(7, "state footprint", guarded(state_footprint));
    match &toy {
        Some(t) => report(8, "simulator direction", guarded(|| simulator_direction(t))),
        None => report(8, "simulator direction", outcome(false, "toy conversion panicked".into())),
    }
    report(9, "SOP fixtures", guarded(sop_fixtures));
    report(10, "CLI determinism", guarded(cli_determinism));

    let mut out = std::io::stdout();
    let _ = writeln!(out, "\nacceptance summary");
    for (n, name, o) in &results {
        let _ = writeln!(out, "criterion {n:>2}: {} ({name})", if o.pass { "PASS" } else { "FAIL" });
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    let _ = writeln!(out, "{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
