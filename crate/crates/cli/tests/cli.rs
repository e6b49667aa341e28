use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn uvp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uvp"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("UVP_OUT_DIR")
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn spectrum_of_binary_tree() {
    let dir = tempfile::tempdir().unwrap();
    let out = uvp(dir.path(), &["spectrum", "--family", "padic:2", "--depth", "2", "--s", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "support_address,level,multiplicity,lambda_closed_form,lambda_dense_oracle,abs_diff"
    );
    let mut lambdas: Vec<f64> = lines.map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    lambdas.sort_by(f64::total_cmp);
    assert_eq!(lambdas, vec![0.0, 2.0, 3.0, 3.0]);
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["subcommand"], "spectrum");
    let report = json(&dir.path().join("run_report.json"));
    assert_eq!(report["status"], "ok");
    assert_eq!(report["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn check_passes_on_binary_tree() {
    let dir = tempfile::tempdir().unwrap();
    let out = uvp(dir.path(), &["check", "--family", "padic:2", "--depth", "3", "--s", "3"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(!stdout.contains("FAIL"));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 10);
    let results = json(&dir.path().join("check.json"));
    assert_eq!(results.as_array().unwrap().len(), 11);
}

#[test]
fn failing_check_exits_with_3() {
    // period-2 branching breaks the factorisation at odd levels
    let dir = tempfile::tempdir().unwrap();
    let out = uvp(dir.path(), &["check", "--family", "level-regular:2,3", "--depth", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL factorisation"));
    let report = json(&dir.path().join("run_report.json"));
    assert_eq!(report["status"], "check_failed");
    assert_eq!(report["exit_code"], 3);
}

#[test]
fn branching_one_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"tree": {"family": {"kind": "level_regular", "branching": [2, 1]}, "depth": 3}}"#,
    );
    let out = uvp(dir.path(), &["zeta", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("level_regular"), "{stderr}");
    let report = json(&dir.path().join("run_report.json"));
    assert_eq!(report["status"], "error");
    assert!(!dir.path().join("zeta.csv").exists());

    let out = uvp(dir.path(), &["zeta", "--family", "padic:4", "--depth", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p-adic"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"tree": {"family": {"kind": "padic", "p": 2}, "depth": 3},
            "sigma": 2}"#,
    );
    let out = uvp(dir.path(), &["zeta", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown field `sigma`") && stderr.contains("line 2"), "{stderr}");
}

#[test]
fn bad_flags_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(uvp(dir.path(), &["spectrum", "--family", "cubic:3"]).status.code(), Some(2));
    assert_eq!(uvp(dir.path(), &["spectrum", "--depth", "x"]).status.code(), Some(2));
    assert_eq!(uvp(dir.path(), &["teleport"]).status.code(), Some(2));
    assert_eq!(uvp(dir.path(), &["heat", "--times", "0.1,-1"]).status.code(), Some(2));
    assert_eq!(
        uvp(dir.path(), &["spectrum", "--metric", "baire", "--family", "padic:3"]).status.code(),
        Some(0)
    );
}

#[test]
fn heat_writes_one_file_per_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = uvp(dir.path(), &["heat", "--depth", "2", "--times", "0.1,1"]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["heat_000.csv", "heat_001.csv", "heat.json", "manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let csv = fs::read_to_string(dir.path().join("heat_000.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 16);
    // rows of p_t sum to one
    let mut sums = std::collections::BTreeMap::<String, f64>::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        *sums.entry(f[0].to_string()).or_default() += f[2].parse::<f64>().unwrap();
    }
    assert!(sums.values().all(|s| (s - 1.0).abs() < 1e-12));
}

#[test]
fn empty_times_write_only_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"tree": {"family": {"kind": "padic", "p": 2}, "depth": 2}, "times": []}"#,
    );
    let out = uvp(dir.path(), &["heat", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let manifest = json(&dir.path().join("manifest.json"));
    assert!(manifest["files"].as_array().unwrap().is_empty());
    assert_eq!(manifest["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--family", "random:2,3,5", "--depth", "3", "--s", "2.5", "--seed", "42", "--paths", "20000"];
    for dir in [a.path(), b.path()] {
        assert_eq!(uvp(dir, &args).status.code(), Some(0));
    }
    for name in ["simulate.json", "manifest.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let sim = json(&a.path().join("simulate.json"));
    let total: u64 = sim["counts"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 20000);
    assert!(sim["tv_distance"].as_f64().unwrap() < 0.05);
}

#[test]
fn simulate_rejects_a_non_leaf_start() {
    let dir = tempfile::tempdir().unwrap();
    let out = uvp(dir.path(), &["simulate", "--depth", "3", "--x0", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = uvp(dir.path(), &["simulate", "--depth", "3", "--x0", "0.1.1", "--T", "0.5", "--paths", "1000"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&dir.path().join("simulate.json"))["x0"], "0.1.1");
}

#[test]
fn remaining_subcommands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, file) in [
        ("zeta", "zeta.csv"),
        ("measure", "measure.csv"),
        ("wavelets", "wavelets.csv"),
        ("green", "green.json"),
    ] {
        let out = uvp(dir.path(), &[cmd, "--family", "padic:3", "--depth", "2", "--s", "1.5"]);
        assert_eq!(out.status.code(), Some(0), "{cmd}");
        assert!(dir.path().join(file).exists(), "{file}");
    }
    let measure = fs::read_to_string(dir.path().join("measure.csv")).unwrap();
    assert!(measure.lines().any(|l| l == "0.2,2,1/9,1/9"));
    assert_eq!(measure.lines().count(), 1 + 13);
    let wavelets = fs::read_to_string(dir.path().join("wavelets.csv")).unwrap();
    // constant on 9 leaves, root wavelets 2×9, level-1 wavelets 3×2×3
    assert_eq!(wavelets.lines().count(), 1 + 9 + 18 + 18);
    let green = json(&dir.path().join("green.json"));
    assert_eq!(green["convergence_class"], "convergent");
    assert!(dir.path().join("green.csv").exists());
    let zeta = fs::read_to_string(dir.path().join("zeta.csv")).unwrap();
    assert_eq!(zeta.lines().next().unwrap(), "level,term,cumulative");
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_uvp"))
        .args(["measure", "--depth", "1"])
        .env("UVP_OUT_DIR", &target)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("measure.csv").exists());
}
