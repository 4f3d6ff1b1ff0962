use std::path::Path;
use std::process::{Command, Output};

fn spikepack(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikepack"))
        .args(args)
        .env("SPIKEPACK_OUT", out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn equivalence_suite_passes_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikepack(dir.path(), &["equiv", "--cases", "5000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("serial-parallel: 0 mismatches / 5000 cases"), "{stdout}");
    assert!(dir.path().join("equiv.csv").exists());
    assert!(dir.path().join("run_config.toml").exists());
}

#[test]
fn strict_comparator_breaks_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikepack(dir.path(), &["equiv", "--cases", "1000", "--comparator", "strictly-greater"]);
    assert_eq!(code(&o), 1);
    let text = std::fs::read_to_string(dir.path().join("equiv_counterexamples.csv")).unwrap();
    assert!(text.lines().count() > 1);
}

#[test]
fn invalid_parameters_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&spikepack(dir.path(), &["equiv", "--tau", "1.0"])), 2);
    assert_eq!(code(&spikepack(dir.path(), &["mi", "--samples", "0"])), 2);
    assert_eq!(code(&spikepack(dir.path(), &["train", "--samples", "0"])), 2);
    assert_eq!(code(&spikepack(dir.path(), &["infer"])), 2);
    assert_eq!(code(&spikepack(dir.path(), &["no-such-command"])), 2);
    assert_eq!(code(&spikepack(dir.path(), &["equiv", "--cases", "ten"])), 2);
}

#[test]
fn missing_and_corrupt_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.spkn");
    let o = spikepack(dir.path(), &["infer", "--model", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let bad = dir.path().join("bad.spkn");
    std::fs::write(&bad, b"SPKN\x01").unwrap();
    assert_eq!(code(&spikepack(dir.path(), &["infer", "--model", bad.to_str().unwrap()])), 3);
    assert_eq!(code(&spikepack(dir.path(), &["train", "--data", "nope.csv"])), 3);
    let cfg = dir.path().join("absent.toml");
    assert_eq!(code(&spikepack(dir.path(), &["--config", cfg.to_str().unwrap(), "equiv"])), 3);
}

#[test]
fn help_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikepack(dir.path(), &["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("simulate"));
}

#[test]
fn report_on_empty_directory_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let empty = tempfile::tempdir().unwrap();
    let o = spikepack(dir.path(), &["report", "--dir", empty.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let md = std::fs::read_to_string(dir.path().join("summary.md")).unwrap();
    assert!(md.contains("| table | rows |"));
}

#[test]
fn flags_override_config_file_and_echo_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 3\n[train]\nepochs = 4\nsamples = 100\n").unwrap();
    let first = dir.path().join("first");
    let o = spikepack(&first, &["--config", cfg.to_str().unwrap(), "train", "--epochs", "6"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let echoed = std::fs::read_to_string(first.join("run_config.toml")).unwrap();
    assert!(echoed.contains("seed = 3"));
    assert!(echoed.contains("epochs = 6"));
    assert!(echoed.contains("samples = 100"));
    let curve = std::fs::read_to_string(first.join("loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 7);

    let second = dir.path().join("second");
    let echo_path = first.join("run_config.toml");
    let o = spikepack(&second, &["--config", echo_path.to_str().unwrap(), "train"]);
    assert_eq!(code(&o), 0);
    for f in ["loss_curve.csv", "snn.spkn", "train_summary.csv", "run_config.toml"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[train]\nepochz = 4\n").unwrap();
    assert_eq!(code(&spikepack(dir.path(), &["--config", cfg.to_str().unwrap(), "train"])), 2);
}

#[test]
fn json_format_and_csv_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pts.csv");
    let mut text = String::new();
    for i in 0..120 {
        let x = (i as f64 / 120.0) * 2.0 - 1.0;
        text.push_str(&format!("{},{x},{}\n", usize::from(x > 0.0), -x));
    }
    std::fs::write(&data, text).unwrap();
    let o = spikepack(
        dir.path(),
        &["--format", "json", "train", "--data", data.to_str().unwrap(), "--epochs", "5", "--hidden", "8"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("train_summary.json")).unwrap();
    assert!(summary.contains("final_accuracy"));
    let model = dir.path().join("snn.spkn");
    let infer_out = dir.path().join("infer");
    let o = spikepack(&infer_out, &["infer", "--model", model.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let preds = std::fs::read_to_string(infer_out.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 121);
}

#[test]
fn simulate_replays_a_spike_stream() {
    use spikepack_core::spike_tensor::{pack, write_stream, SpikeMatrix};
    let dir = tempfile::tempdir().unwrap();
    let o = spikepack(dir.path(), &["train", "--samples", "100", "--epochs", "3", "--hidden", "16"]);
    assert_eq!(code(&o), 0);
    let model = dir.path().join("snn.spkn");
    let records: Vec<_> = (0..3)
        .map(|k| {
            let bits = (0..16 * 8).map(|i| u8::from((i + k) % 3 == 0)).collect();
            pack(&SpikeMatrix::new(16, 8, bits).unwrap(), 2.0).unwrap()
        })
        .collect();
    let stream = dir.path().join("trace.bin");
    write_stream(std::fs::File::create(&stream).unwrap(), &records).unwrap();
    let sim_out = dir.path().join("sim");
    let o = spikepack(
        &sim_out,
        &["simulate", "--model", model.to_str().unwrap(), "--trace", stream.to_str().unwrap(), "--layer", "1"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sim = std::fs::read_to_string(sim_out.join("sim.csv")).unwrap();
    assert_eq!(sim.lines().count(), 3);
}
