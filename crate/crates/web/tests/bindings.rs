use serde_json::Value;
use wsrm_web::{budget_sweep_json, cellsim_json, example_instance, solve_json};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn solve_reports_bits_and_trace() {
    let newton = parse(&solve_json(&example_instance(), "dpc-newton").unwrap());
    let subgrad = parse(&solve_json(&example_instance(), "dpc-subgrad").unwrap());
    let (a, b) = (newton["weighted_sum_bits"].as_f64().unwrap(), subgrad["weighted_sum_bits"].as_f64().unwrap());
    assert!((a - b).abs() / a < 1e-3);
    assert!(newton["trace"].as_array().unwrap().len() > 1);
    assert_eq!(newton["usage"].as_array().unwrap().len(), 3);
}

#[test]
fn solve_rejects_bad_input() {
    assert!(solve_json("{}", "dpc-newton").is_err());
    assert!(solve_json(&example_instance(), "simplex").unwrap_err().contains("simplex"));
}

#[test]
fn sweep_is_monotone_and_dpc_dominates() {
    let pts = parse(&budget_sweep_json(10.0, 5.0, 5).unwrap());
    let pts = pts.as_array().unwrap();
    assert_eq!(pts.len(), 5);
    let mut last = (0.0, 0.0);
    for p in pts {
        let (d, z) = (p["dpc_bits"].as_f64().unwrap(), p["zf_bits"].as_f64().unwrap());
        assert!(z <= d + 1e-9);
        assert!(d >= last.0 - 1e-6 && z >= last.1 - 1e-4, "{p}");
        last = (d, z);
    }
    assert!(budget_sweep_json(10.0, 5.0, 0).is_err());
}

#[test]
fn short_cellsim_run() {
    let v = parse(&cellsim_json("coordinated", 0.0, "pfs", "zf", 20, 3).unwrap());
    assert_eq!(v["users"].as_array().unwrap().len(), 8);
    assert!(v["max_ici"].as_f64().unwrap() <= 1.0 + 1e-6);
    assert!(cellsim_json("reuse3", 0.0, "pfs", "zf", 20, 3).is_err());
}
