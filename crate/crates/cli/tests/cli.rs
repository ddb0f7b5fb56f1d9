use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hosf_core::grid::read_snapshot;
use serde_json::{json, Value};
use tempfile::TempDir;

fn hosf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hosf"))
        .args(args)
        .current_dir(dir)
        .env_remove("HOSF_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

#[test]
fn missing_config_is_a_configuration_error() {
    let tmp = TempDir::new().unwrap();
    let o = hosf(tmp.path(), &["run", "nope.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn unknown_key_is_named() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({"preset": "free-gaussian", "overrides": {"integrator": {"dtt": 0.1}}}),
    );
    let o = hosf(tmp.path(), &["validate-config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dtt"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "d.json", &json!({"preset": "free-gaussian", "colour": 1}));
    let o = hosf(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(hosf(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(hosf(tmp.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn free_gaussian_run_writes_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({"preset": "free-gaussian", "output": "out",
                "overrides": {"cadence": {"diagnostics_every": 10, "snapshot_every": 200}}}),
    );
    let o = hosf(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("out");
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let t = column(&diag, "time");
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    assert!((t.last().unwrap() - 20.0).abs() < 1e-12);
    let norm = column(&diag, "norm_1");
    assert!(norm.iter().all(|n| (n - 1.0).abs() < 1e-12));
    let drift = fs::read_to_string(out.join("drift.csv")).unwrap();
    assert!(drift.starts_with("quantity,max_drift\n"));

    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    for key in [
        "tool",
        "cli_version",
        "core_version",
        "command",
        "config",
        "resolved_scenario",
        "threads",
        "started_at",
        "wall_clock_seconds",
        "status",
        "outputs",
    ] {
        assert!(manifest.get(key).is_some(), "{key}");
    }
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["run"]["steps"], 400);

    let final_snap = out.join("snapshots/step00000400_orbital1.bin");
    let psi = read_snapshot(&mut fs::File::open(final_snap).unwrap()).unwrap();
    assert_eq!(psi.grid.points, 1024);
    assert!((hosf_core::grid::l2_norm(&psi) - 1.0).abs() < 1e-12);
}

#[test]
fn runs_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let cfg = write_config(
            tmp.path(),
            &format!("{name}.json"),
            &json!({"preset": "hf-pair", "output": name,
                    "overrides": {"horizon": 0.2, "cadence": {"diagnostics_every": 5, "snapshot_every": 40}}}),
        );
        let o = hosf(tmp.path(), &["run", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let out = tmp.path().join(name);
        files.push((
            fs::read(out.join("diagnostics.csv")).unwrap(),
            fs::read(out.join("snapshots/step00000040_orbital2.bin")).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn alpha_preset_conserves_norm() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({"preset": "alpha", "output": "out", "overrides": {"horizon": 2.0}}),
    );
    let o = hosf(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let drift = fs::read_to_string(tmp.path().join("out/drift.csv")).unwrap();
    let norm_drift: f64 = drift
        .lines()
        .find(|l| l.starts_with("norm_1,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(norm_drift < 1e-10, "{norm_drift}");
}

#[test]
fn picard_failure_exits_two_with_last_good_state() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({"preset": "hf-pair", "output": "out",
                "overrides": {"horizon": 2.0,
                              "integrator": {"method": "duhamel_picard", "dt": 0.5, "picard_max_iter": 2}}}),
    );
    let o = hosf(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let out = tmp.path().join("out");
    assert!(out.join("snapshots/last_good_step00000000_orbital1.bin").exists());
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "numerical_failure");
    assert!(manifest["error"].as_str().unwrap().contains("Picard"));
}

#[test]
fn invalid_thread_count_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hosf"))
        .args(["coeffs", "--jmax", "2"])
        .env("HOSF_THREADS", "zero")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("HOSF_THREADS"));
}

#[test]
fn coeffs_table() {
    let tmp = TempDir::new().unwrap();
    let o = hosf(tmp.path(), &["coeffs", "--jmax", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("j,numerator,denominator"));
    assert!(rows[4].starts_with("3,1,16,"));
    for bad in ["31", "-1"] {
        assert_eq!(hosf(tmp.path(), &["coeffs", "--jmax", bad]).status.code(), Some(1));
    }
}

#[test]
fn truncation_table() {
    let tmp = TempDir::new().unwrap();
    let o = hosf(tmp.path(), &["truncation", "--jmax", "3", "--speeds", "0,0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let speed = column(&text, "speed");
    let err = column(&text, "relative_error");
    assert_eq!(speed.len(), 6);
    for (s, e) in speed.iter().zip(&err) {
        if *s == 0.0 {
            assert_eq!(*e, 0.0);
        } else {
            assert!(*e > 0.0);
        }
    }
    assert_eq!(hosf(tmp.path(), &["truncation", "--jmax", "2", "--speeds", "1"]).status.code(), Some(1));
}

#[test]
fn decay_order_one() {
    let tmp = TempDir::new().unwrap();
    let o = hosf(tmp.path(), &["decay", "--J", "1", "--samples", "s.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let exponent = column(&stdout(&o), "exponent")[0];
    assert!((exponent + 0.5).abs() < 0.05, "{exponent}");
    assert_eq!(column(&fs::read_to_string(tmp.path().join("s.csv")).unwrap(), "time").len(), 12);
    assert_eq!(hosf(tmp.path(), &["decay", "--J", "2", "--dimension", "3"]).status.code(), Some(1));
}

#[test]
fn compare_orders_ranks_orders() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        &json!({"preset": "free-gaussian", "overrides": {"horizon": 5.0}}),
    );
    let o = hosf(tmp.path(), &["compare-orders", cfg.to_str().unwrap(), "--orders", "1,2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let j1 = *column(&text, "J=1_vs_exact").last().unwrap();
    let j2 = *column(&text, "J=2_vs_exact").last().unwrap();
    assert!(j2 < j1, "{j1} {j2}");
}
