//! End-to-end runs of the binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_readout-codesign");

fn run(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("READOUT_CODESIGN_OUT");
    if let Some(dir) = env_out {
        cmd.env("READOUT_CODESIGN_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn run_ok(sub: &str, config: &str, out: &Path) -> Value {
    let o = run(&[sub, "--config", config, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

const CHEAP: &str = r#"{
  "seed": 3,
  "dynamics": {"g1_MHz": 0.8, "g2_MHz": 3.7, "g3_MHz": 2.3, "g_MHz": 4.14, "n_steps": 1024, "duration_us": 5.0},
  "gain": {"n_samples": 801},
  "planner": {"admit_band_edges": true},
  "jpa": {"n_cells": 1, "s11_points": 101, "phase_points": 101},
  "chain_sim": {"duration_ns": 60.0}
}"#;

#[test]
fn every_subcommand_writes_its_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), CHEAP);
    let expected: &[(&str, &[&str])] = &[
        ("jpa-modes", &["c_matrix.csv", "linv_matrix.csv", "modes.csv", "s11.csv"]),
        ("jpa-potential", &["potential.csv", "taylor.csv"]),
        ("gain-synth", &["gain_profile.csv"]),
        ("gain-extrema", &["extrema.json", "extrema.csv"]),
        ("dyn-simulate", &["trajectory.csv", "spectrum.csv", "peaks.json", "verdict.json"]),
        ("spec-fft", &["spectrum.csv", "peaks.json"]),
        ("spec-classify", &["spectrum.csv", "peaks.json", "verdict.json"]),
        ("plan", &["plan.json", "plan.csv"]),
        ("chain-budget", &["budget.csv", "budget.txt"]),
        ("chain-simulate", &["waveforms.csv", "output_spectrum.csv"]),
    ];
    for (sub, files) in expected {
        let out = tmp.path().join(sub);
        let report = run_ok(sub, &cfg, &out);
        assert_eq!(report["command"], *sub);
        assert_eq!(report["seed"], 3);
        let listed: Vec<&str> = report["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        for f in *files {
            assert!(out.join(f).is_file(), "{sub}: missing {f}");
            assert!(listed.iter().any(|l| l.ends_with(f)), "{sub}: {f} not in report");
        }
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), CHEAP);
    for sub in ["dyn-simulate", "plan", "chain-simulate", "jpa-modes"] {
        let (a, b) = (tmp.path().join(format!("{sub}-a")), tmp.path().join(format!("{sub}-b")));
        run_ok(sub, &cfg, &a);
        run_ok(sub, &cfg, &b);
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            if name == "report.json" {
                continue;
            }
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{sub}/{name:?}");
        }
    }
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();

    let unknown = run(&["frobnicate", "--config", "x.json"], None);
    assert_eq!(unknown.status.code(), Some(1));

    let bad_key = write_config(tmp.path(), r#"{"chain": {"receiver_bw_GHz": 4}}"#);
    let o = run(&["chain-budget", "--config", &bad_key, "--out", out], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("receiver_bw_MHz"));

    let bad_value = write_config(tmp.path(), r#"{"gain": {"linewidth_MHz": -1}}"#);
    assert_eq!(run(&["gain-synth", "--config", &bad_value, "--out", out], None).status.code(), Some(1));

    let missing = tmp.path().join("absent.json");
    assert_eq!(run(&["plan", "--config", missing.to_str().unwrap(), "--out", out], None).status.code(), Some(1));

    let singular = write_config(tmp.path(), r#"{"jpa": {"c_secondary_fF": 1e20}}"#);
    assert_eq!(run(&["jpa-modes", "--config", &singular, "--out", out], None).status.code(), Some(2));

    let ill_conditioned = write_config(tmp.path(), r#"{"jpa": {"c_shunt_fF": 1e15}}"#);
    assert_eq!(run(&["jpa-modes", "--config", &ill_conditioned, "--out", out], None).status.code(), Some(2));
}

#[test]
fn env_var_sets_output_dir() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), r#"{"output_dir": "never-used"}"#);
    let env_dir = tmp.path().join("from-env");
    let o = run(&["chain-budget", "--config", &cfg], Some(&env_dir));
    assert_eq!(o.status.code(), Some(0));
    assert!(env_dir.join("budget.csv").is_file());

    // An explicit flag wins over the variable.
    let flag_dir = tmp.path().join("from-flag");
    let o = run(&["chain-budget", "--config", &cfg, "--out", flag_dir.to_str().unwrap()], Some(&env_dir));
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.join("budget.csv").is_file());
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), r#"{"seed": 1}"#);
    let out = tmp.path().join("o");
    let o = run(&["chain-budget", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "42"], None);
    assert_eq!(o.status.code(), Some(0));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 42);
}

#[test]
fn budget_and_chain_numbers() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "{}");
    let r = run_ok("chain-budget", &cfg, &tmp.path().join("b"));
    let d = &r["derived"];
    assert!((d["total_power_mW"].as_f64().unwrap() - 67.98).abs() < 1e-9, "{d}");
    assert_eq!(d["qubit_capacity"], 160);
    let r = run_ok("chain-simulate", &cfg, &tmp.path().join("s"));
    assert_eq!(r["derived"]["dominant_freq_MHz"].as_f64().unwrap(), 200.0);
}

#[test]
fn spec_fft_reads_trace_csv() {
    let tmp = TempDir::new().unwrap();
    let trace = tmp.path().join("trace.csv");
    let mut body = String::from("t_us,I_a,I_b\n");
    for k in 0..512 {
        let t = k as f64 / 512.0;
        let v = (2.0 * std::f64::consts::PI * 32.0 * t).cos();
        body.push_str(&format!("{t},{v},0\n"));
    }
    fs::write(&trace, body).unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(r#"{{"spectral": {{"trace_csv": {:?}, "window": "none", "zero_pad": 1}}}}"#, trace.to_str().unwrap()),
    );
    let out = tmp.path().join("o");
    run_ok("spec-fft", &cfg, &out);
    let peaks: Value = serde_json::from_str(&fs::read_to_string(out.join("peaks.json")).unwrap()).unwrap();
    let first = &peaks["peaks"][0];
    assert!((first[0].as_f64().unwrap() - 32.0).abs() < 1e-9, "{peaks}");
}

#[test]
fn example_configs_run() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("two_qubit_weak", "dyn-simulate"),
        ("two_qubit_strong", "dyn-simulate"),
        ("jpa", "jpa-modes"),
        ("jpa", "jpa-potential"),
        ("plan", "plan"),
        ("receiver", "chain-budget"),
        ("receiver", "chain-simulate"),
    ];
    for (name, sub) in cases {
        let cfg = dir.join(format!("{name}.json"));
        let r = run_ok(sub, cfg.to_str().unwrap(), &tmp.path().join(format!("{name}-{sub}")));
        match name {
            "two_qubit_weak" => assert_eq!(r["derived"]["verdict"]["entangled"], false),
            "two_qubit_strong" => assert_eq!(r["derived"]["verdict"]["entangled"], true),
            "plan" => assert_eq!(r["derived"]["violations"].as_array().unwrap().len(), 0),
            _ => {}
        }
    }
}
