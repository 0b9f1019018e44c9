//! Browser bindings: solve an instance, sweep the interference budget of the
//! bundled example, and run a short two-cell simulation. Every entry point
//! returns JSON with rates in bits per channel use.

use serde::Serialize;
use wasm_bindgen::prelude::*;
use wsrm::cellsim::{run_simulation, PrecoderKind, Scheduler, Scheme, SimConfig};
use wsrm::dpc_dual::{outer_subgradient_solve, SubgradientOptions};
use wsrm::dpc_newton::{newton_solve, NewtonOptions};
use wsrm::zf_gradient::{gradient_solve, GradientOptions};
use wsrm::zf_twostep::{twostep_solve, TwoStepOptions};
use wsrm::{io, zf_rates, ConvergenceTrace, Instance, RateReport};

fn bits(nats: f64) -> f64 {
    nats * std::f64::consts::LOG2_E
}

#[derive(Serialize)]
struct TracePoint {
    iteration: usize,
    objective_bits: f64,
    residual: f64,
}

#[derive(Serialize)]
struct SolveView {
    solver: String,
    weighted_sum_bits: f64,
    rates_bits: Vec<f64>,
    usage: Vec<f64>,
    budgets: Vec<f64>,
    matmuls: u64,
    trace: Vec<TracePoint>,
}

#[derive(Serialize)]
struct SweepPoint {
    gamma: f64,
    dpc_bits: Option<f64>,
    zf_bits: Option<f64>,
}

#[derive(Serialize)]
struct UserView {
    cell: usize,
    user: usize,
    position_km: f64,
    rate_bits: f64,
}

#[derive(Serialize)]
struct SimView {
    slots: usize,
    skipped_slots: usize,
    max_ici: Option<f64>,
    max_min_ratio: f64,
    users: Vec<UserView>,
}

fn run_solver(instance: &Instance, solver: &str) -> Result<(RateReport, ConvergenceTrace), String> {
    let err = |e: wsrm::Error| e.to_string();
    match solver {
        "dpc-newton" => newton_solve(instance, &NewtonOptions::default()).map(|(s, t)| (s.report, t)).map_err(err),
        "dpc-subgrad" => outer_subgradient_solve(instance, &SubgradientOptions { trace_inner: false, ..Default::default() })
            .map(|(s, t)| (s.report, t))
            .map_err(err),
        "zf-gradient" => gradient_solve(instance, &GradientOptions::default())
            .map(|(_, pre, t)| (zf_rates(instance, &pre), t))
            .map_err(err),
        "zf-twostep" => twostep_solve(instance, &TwoStepOptions::default(), None).map(|(s, t)| (s.report, t)).map_err(err),
        other => Err(format!("unknown solver `{other}`")),
    }
}

pub fn solve_json(instance: &str, solver: &str) -> Result<String, String> {
    let inst = io::parse_instance(instance).map_err(|e| e.to_string())?;
    let (report, trace) = run_solver(&inst, solver)?;
    let view = SolveView {
        solver: solver.to_string(),
        weighted_sum_bits: bits(report.weighted_sum),
        rates_bits: report.rates.iter().map(|r| bits(*r)).collect(),
        usage: report.usage.clone(),
        budgets: inst.budgets(),
        matmuls: trace.matmuls,
        trace: trace
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| TracePoint { iteration: i, objective_bits: bits(r.objective), residual: r.residual_norm })
            .collect(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// DPC and ZF optimum of the bundled example with sum power `power` and both
/// interference budgets set to each of `points` values up to `gamma_max`.
pub fn budget_sweep_json(power: f64, gamma_max: f64, points: usize) -> Result<String, String> {
    if !(power > 0.0 && gamma_max > 0.0) || points == 0 || points > 200 {
        return Err("need power > 0, gamma_max > 0 and 1..=200 points".into());
    }
    let base = io::table1();
    let mut out = Vec::with_capacity(points);
    for i in 1..=points {
        let gamma = gamma_max * i as f64 / points as f64;
        let cons = base
            .constraints()
            .iter()
            .enumerate()
            .map(|(l, c)| c.with_gamma(if l == 0 { power } else { gamma }))
            .collect::<wsrm::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        let inst = base.with_constraints(cons).map_err(|e| e.to_string())?;
        let dpc = newton_solve(&inst, &NewtonOptions::default()).ok().map(|(s, _)| bits(s.weighted_sum()));
        let zf = twostep_solve(&inst, &TwoStepOptions::default(), None).ok().map(|(s, _)| bits(s.report.weighted_sum));
        out.push(SweepPoint { gamma, dpc_bits: dpc, zf_bits: zf });
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

pub fn cellsim_json(scheme: &str, rho: f64, scheduler: &str, precoder: &str, slots: usize, seed: u64) -> Result<String, String> {
    let scheme = match scheme {
        "coordinated" => Scheme::Coordinated,
        "reuse1" => Scheme::Reuse1,
        "ffr" => Scheme::Ffr { rho },
        other => return Err(format!("unknown scheme `{other}`")),
    };
    let scheduler = match scheduler {
        "pfs" => Scheduler::Pfs,
        "hfs" => Scheduler::Hfs,
        other => return Err(format!("unknown scheduler `{other}`")),
    };
    let precoder = match precoder {
        "dpc" => PrecoderKind::Dpc,
        "zf" => PrecoderKind::Zf,
        other => return Err(format!("unknown precoder `{other}`")),
    };
    let cfg = SimConfig { scheme, scheduler, precoder, slots, seed, ..SimConfig::default() };
    let res = run_simulation(&cfg).map_err(|e| e.to_string())?;
    let view = SimView {
        slots: res.slots,
        skipped_slots: res.skipped_slots,
        max_ici: res.max_ici,
        max_min_ratio: res.max_min_ratio(),
        users: res
            .users
            .iter()
            .map(|u| UserView { cell: u.cell, user: u.user_index, position_km: u.position_km, rate_bits: bits(u.long_term_rate) })
            .collect(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn example_instance() -> String {
    io::TABLE1_JSON.to_string()
}

#[wasm_bindgen]
pub fn solve(instance: &str, solver: &str) -> Result<String, JsError> {
    solve_json(instance, solver).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn budget_sweep(power: f64, gamma_max: f64, points: usize) -> Result<String, JsError> {
    budget_sweep_json(power, gamma_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn cellsim(scheme: &str, rho: f64, scheduler: &str, precoder: &str, slots: usize, seed: u32) -> Result<String, JsError> {
    cellsim_json(scheme, rho, scheduler, precoder, slots, u64::from(seed)).map_err(|e| JsError::new(&e))
}
