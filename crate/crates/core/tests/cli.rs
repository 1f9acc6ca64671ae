//! End-to-end tests of the `simgap` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use simgap::calibration::{self, HIDDEN_PARAMS_FILE, HISTORY_FILE};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simgap")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(out.status.success(), "simgap {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

/// Commands and hardware with short sequences in `d`.
fn setup(d: &Path, repeats: &str) {
    ok(&["gen-commands", "--seed", "5", "--duration", "2", "--out-dir", "commands"], d);
    ok(&["make-hardware", "--seed", "5", "--repeats", repeats, "--out-dir", "hardware"], d);
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "2");
    assert_eq!(csv_files(&d.join("commands")).len(), 4);
    assert_eq!(csv_files(&d.join("hardware")).len(), 8);

    // Calibration must not depend on the sealed ground truth.
    let hidden = fs::read(d.join("hardware").join(HIDDEN_PARAMS_FILE)).unwrap();
    fs::remove_file(d.join("hardware").join(HIDDEN_PARAMS_FILE)).unwrap();
    ok(&["calibrate", "--seed", "6", "--hardware-dir", "hardware", "--iterations", "3", "--population", "4", "--out-dir", "run"], d);
    fs::write(d.join("hardware").join(HIDDEN_PARAMS_FILE), hidden).unwrap();

    ok(&["simulate", "--out-dir", "sim", "--rollouts", "1"], d);
    let summary = ok(&["score", "--hardware-dir", "hardware", "--sim-dir", "sim", "--out-dir", "scored"], d);
    assert!(summary.starts_with("combined_score = "));
    assert!(d.join("scored/score_report.csv").exists());

    let listed = ok(&["report", "--run-dir", "run", "--hardware-dir", "hardware", "--out-dir", "report"], d);
    assert_eq!(listed.lines().count(), 3);
    for f in [calibration::RECOVERY_FILE, calibration::HISTORY_SVG_FILE, calibration::HISTOGRAM_SVG_FILE] {
        assert!(d.join("report").join(f).exists(), "{f} missing");
    }
    let table = fs::read_to_string(d.join("report").join(calibration::RECOVERY_FILE)).unwrap();
    assert!(table.contains("tau_max,") && table.contains("97"));
}

#[test]
fn zero_duration_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["gen-commands", "--duration", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none(), "nothing should be written");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["score", "--bogus"], dir.path()).status.code(), Some(2));
}

#[test]
fn disjoint_sequences_exit_3_and_name_them() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "1");
    ok(&["simulate", "--out-dir", "sim", "--rollouts", "1"], d);
    for f in csv_files(&d.join("sim")) {
        if f.contains("randomized") || f.contains("user") {
            fs::remove_file(d.join("sim").join(f)).unwrap();
        }
    }
    let out = run(&["score", "--hardware-dir", "hardware", "--sim-dir", "sim"], d);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing: randomized") && err.contains("missing: user"), "{err}");
}

#[test]
fn hardware_scored_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "1");
    let summary = ok(&["score", "--hardware-dir", "hardware", "--sim-dir", "hardware"], d);
    assert!(summary.starts_with("combined_score = 0\n"), "{summary}");
}

#[test]
fn missing_run_dir_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "1");
    let out = run(&["report", "--run-dir", "nope", "--hardware-dir", "hardware"], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn noise_estimate_writes_a_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-commands", "--seed", "5", "--duration", "4", "--out-dir", "commands"], d);
    ok(&["make-hardware", "--seed", "5", "--repeats", "1", "--out-dir", "hardware"], d);
    let rollout = d.join("hardware").join(&csv_files(&d.join("hardware"))[0]);
    ok(&["noise-estimate", "--rollout", rollout.to_str().unwrap(), "--out-dir", "noise"], d);
    let model = simgap::noise::NoiseModel::load(&d.join("noise/noise_model.csv")).unwrap();
    assert_eq!(model.channels.len(), 24);
    assert!(model.sigma.iter().all(|s| s.is_finite() && *s >= 0.0));

    // The estimated model can drive a second batch of hardware.
    ok(&["make-hardware", "--repeats", "1", "--noise-model", "noise/noise_model.csv", "--out-dir", "hw2"], d);
    assert_eq!(csv_files(&d.join("hw2")).len(), 4);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        ok(&["gen-commands", "--seed", "7", "--duration", "2", "--out-dir", &format!("{out}/commands")], d);
        ok(
            &["make-hardware", "--seed", "7", "--repeats", "1", "--commands-dir", &format!("{out}/commands"), "--out-dir", &format!("{out}/hw")],
            d,
        );
    }
    for sub in ["commands", "hw"] {
        let files = csv_files(&d.join("a").join(sub));
        assert!(!files.is_empty());
        for f in files {
            assert_eq!(fs::read(d.join("a").join(sub).join(&f)).unwrap(), fs::read(d.join("b").join(sub).join(&f)).unwrap(), "{f}");
        }
    }
}

#[test]
fn tiny_budget_gives_short_history() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "1");
    assert_eq!(csv_files(&d.join("hardware")).len(), 4);
    ok(&["calibrate", "--hardware-dir", "hardware", "--iterations", "2", "--population", "2", "--out-dir", "run"], d);
    let history = fs::read_to_string(d.join("run").join(HISTORY_FILE)).unwrap();
    assert_eq!(history.lines().count(), 3, "{history}");
}

#[test]
fn resume_continues_from_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d, "1");
    let cal = |iters: &str, out: &str, resume: bool| {
        let mut args = vec!["calibrate", "--seed", "2", "--hardware-dir", "hardware", "--iterations", iters, "--population", "4", "--out-dir", out];
        if resume {
            args.push("--resume");
        }
        ok(&args, d);
    };
    cal("4", "straight", false);
    cal("2", "split", false);
    cal("4", "split", true);
    let read = |run: &str| fs::read(d.join(run).join(HISTORY_FILE)).unwrap();
    assert_eq!(read("straight"), read("split"));
}
