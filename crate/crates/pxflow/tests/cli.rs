use std::path::Path;
use std::process::Command;

use pxflow::config::{parse_config, RunConfig};

fn pxflow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pxflow"))
}

/// A coarse configuration that keeps every command under a few seconds.
fn small_config(kappa: f64) -> String {
    let mut cfg = RunConfig {
        n: 64,
        kappa,
        tau: 1.0 / 128.0,
        sample_dt: 1.0 / 32.0,
        tartar_samples: 2000,
        power_samples: 500,
        norm_samples: 20,
        gronwall_pairs: 3,
        monotone_probes: 10,
        absorbing_members: 3,
        integral_runs: 2,
        ltraj_pairs: 6,
        holder_samples: 6,
        probe_fields: 8,
        probe_trajectories: 2,
        ensemble_size: 4,
        ladder: vec![1.0, 0.1],
        ..RunConfig::default()
    };
    cfg.out = "unused".into();
    cfg.serialize()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn unknown_command_is_a_usage_error() {
    let out = pxflow().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "[flow]\nbogus = 1\n");
    let out = pxflow().arg("constants").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus") && err.contains("line 2"), "{err}");

    let path = write_config(dir.path(), "[exponent]\nkind = constant\np_constant = 1.5\n");
    let out = pxflow().arg("constants").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_round_trips() {
    let text = small_config(0.5);
    let cfg = parse_config(&text).unwrap();
    assert_eq!(parse_config(&cfg.serialize()).unwrap(), cfg);
    assert_eq!(cfg.n, 64);
    assert_eq!(cfg.kappa, 0.5);
}

#[test]
fn constants_json_reports_the_radii() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small_config(1.0));
    let out_dir = dir.path().join("out");
    let out = pxflow()
        .args(["constants", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("constants.json")).unwrap()).unwrap();
    let c = &json["constants"];
    for key in ["r0", "rho1", "c3", "r_v"] {
        assert!(c[key].as_f64().unwrap() > 0.0, "{key}");
    }
    assert!(c["gamma_small"].as_f64().unwrap() > 0.0);
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
    assert!(out_dir.join("summary.txt").exists());
}

#[test]
fn verify_without_reaction_passes() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small_config(0.0));
    let out_dir = dir.path().join("out");
    let out = pxflow()
        .args(["verify", "--seed", "3", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(!stdout.contains("FAIL"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let entries = json.as_array().unwrap();
    assert!(entries.len() >= 10);
    assert!(entries.iter().all(|e| e["seed"] == 3 && e["pass"] == true));
}

#[test]
fn simulate_writes_series_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small_config(1.0));
    let out_dir = dir.path().join("out");
    let out = pxflow()
        .args(["simulate", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let energy = std::fs::read_to_string(out_dir.join("energy.csv")).unwrap();
    assert!(energy.starts_with("t,energy,norm_h,norm_v,sup_abs\n"));
    // 2 / (1/32) intervals plus the header
    assert_eq!(energy.lines().count(), 66);
    assert!(out_dir.join("trajectory.csv").exists());
    assert!(out_dir.join("plots/energy.svg").exists());
}
