use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;

fn table1() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/table1.json")
}

fn wsrm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsrm")).args(args).env_remove("WSRM_JOBS").output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_table1_meets_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wsrm(&["solve", table1().to_str().unwrap(), "--solver", "dpc-newton", "--out-dir", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&dir.path().join("table1.dpc-newton.json"));
    let usage: Vec<f64> = v["usage"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (u, g) in usage.iter().zip([10.0, 5.0, 5.0]) {
        assert!((u - g).abs() < 1e-2, "{usage:?}");
    }
    assert_eq!(v["manifest"]["instance_hash"].as_str().unwrap().len(), 64);
    let csv = fs::read_to_string(dir.path().join("table1.dpc-newton.trace.csv")).unwrap();
    assert!(csv.starts_with("# manifest: {"));
    assert!(csv.lines().nth(1).unwrap().starts_with("iteration,t,objective"));
}

#[test]
fn dpc_solvers_agree_in_bits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut values = Vec::new();
    for solver in ["dpc-newton", "dpc-subgrad"] {
        let o = wsrm(&["solve", table1().to_str().unwrap(), "--solver", solver, "--out-dir", out]);
        assert!(o.status.success(), "{}", stderr(&o));
        values.push(json(&dir.path().join(format!("table1.{solver}.json")))["weighted_sum_bits"].as_f64().unwrap());
    }
    assert!((values[0] - values[1]).abs() / values[0] < 1e-3, "{values:?}");
    // log2(e) · nats
    let nats = json(&dir.path().join("table1.dpc-newton.json"))["report_nats"]["weighted_sum"].as_f64().unwrap();
    assert!((values[0] - nats / std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn twostep_warm_start_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wsrm(&[
        "solve",
        table1().to_str().unwrap(),
        "--solver",
        "zf-twostep",
        "--warmstart-gradient-iters",
        "10",
        "--out-dir",
        out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&dir.path().join("table1.zf-twostep.json"));
    assert_eq!(v["details"]["warmstart_gradient_iters"], 10);
    assert_eq!(v["manifest"]["config"]["settings"]["warmstart_gradient_iters"], 10);
}

#[test]
fn malformed_instance_exits_2_and_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"H": [[[1, 0]]], "constraints": [{"kind": "sum_power", "gamma": 1}]}"#).unwrap();
    let o = wsrm(&["solve", bad.to_str().unwrap(), "--solver", "dpc-newton", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`W`"), "{}", stderr(&o));

    fs::write(&bad, "{\"H\": [[[1, 0]]],\n \"W\": [1], \"gain\": 3, \"constraints\": []}").unwrap();
    let o = wsrm(&["solve", bad.to_str().unwrap(), "--solver", "dpc-newton"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gain") && stderr(&o).contains("line 2"), "{}", stderr(&o));

    let o = wsrm(&["solve", "/nonexistent/instance.json", "--solver", "dpc-newton"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn iteration_cap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wsrm(&["solve", table1().to_str().unwrap(), "--solver", "dpc-subgrad", "--max-iterations", "2", "--out-dir", out]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(!dir.path().join("table1.dpc-subgrad.json").exists());
}

#[test]
fn cdf_is_deterministic_across_runs_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| {
        let path = dir.path().join(name);
        let o = wsrm(&["cdf", "--trials", "3", "--seed", "11", "--jobs", jobs, "--out", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(path).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "3");
    let body = |s: &str| s.lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&a), body(&b));
    assert_eq!(a, run("a.csv", "2"));
    let rows: Vec<&str> = a.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.ends_with(",ok")));
    assert!(rows[0].starts_with("11,") && rows[2].starts_with("13,"));
    for r in rows {
        let f: Vec<f64> = r.split(',').skip(1).take(5).map(|x| x.parse().unwrap()).collect();
        assert!(f[3] <= 1.0 + 1e-3 && f[4] <= 1.0 + 1e-3, "{r}");
    }
}

#[test]
fn cellsim_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = wsrm(&[
        "cellsim",
        "--scheme",
        "coordinated",
        "--scheduler",
        "hfs",
        "--precoder",
        "zf",
        "--slots",
        "10",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(start.elapsed() < Duration::from_secs(30));
    let csv = fs::read_to_string(dir.path().join("cellsim.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 8);
    let v = json(&dir.path().join("cellsim.json"));
    assert_eq!(v["runs"][0]["slots"], 10);
    assert!(v["runs"][0]["max_ici"].as_f64().unwrap() <= 1.0 + 1e-6);
}

#[test]
fn cellsim_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    fs::write(&cfg, r#"{"slots": 5, "users": 3, "scheme": {"kind": "ffr", "rho": 0.25}}"#).unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wsrm(&["cellsim", "--config", cfg.to_str().unwrap(), "--slots", "3", "--replicas", "2", "--out-dir", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&dir.path().join("cellsim.json"));
    let c = &v["manifest"]["config"];
    assert_eq!(c["slots"], 3);
    assert_eq!(c["users"], 3);
    assert_eq!(c["scheme"]["rho"], 0.25);
    assert_eq!(v["manifest"]["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(fs::read_to_string(dir.path().join("cellsim.csv")).unwrap().lines().count(), 2 + 2 * 6);
}

#[test]
fn cellsim_input_errors_exit_2() {
    let o = wsrm(&["cellsim", "--scheme", "reuse1", "--rho", "0.5", "--slots", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = wsrm(&["cellsim", "--scheme", "ffr", "--rho", "1.5", "--slots", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    fs::write(&cfg, r#"{"slotz": 5}"#).unwrap();
    let o = wsrm(&["cellsim", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("slotz"));
}

#[test]
fn help_lists_flags() {
    let o = wsrm(&["cellsim", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in ["--config", "--scheme", "--rho", "--jobs", "--replicas", "WSRM_JOBS"] {
        assert!(text.contains(flag), "missing {flag}");
    }
}
