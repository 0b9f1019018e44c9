//! Two-step ZF solver: alternate a waterfilling power step over fixed steering
//! directions with a steering step that re-optimizes the nullspace part of the
//! generalized inverse `T = G·diag(a) + U⊥B` and rescales by the common factor η.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::model::{constraint_usage, zf_rates, Instance, Precoder, RateReport};
use crate::socp::{socp_min_max_norm, MinMaxProblem};
use crate::trace::{ConvergenceTrace, TraceRow};
use crate::zf_core::{extract_from_relaxation, zf_geometry, ZfGeometry};
use crate::zf_gradient::RelaxSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    pub max_iterations: usize,
    /// Relative duality-gap tolerance of the dual descent.
    pub gap: f64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self { max_iterations: 500, gap: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStepOptions {
    /// Relative objective change over a full round that stops the alternation.
    pub tol: f64,
    pub max_rounds: usize,
    pub power: PowerOptions,
}

impl Default for TwoStepOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_rounds: 200, power: PowerOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    /// Powers applied to the given (unnormalized) columns.
    pub q: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Weighted sum rate of the returned feasible `q`.
    pub value: f64,
    /// Dual bound `D(λ) ≥ value`.
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct TwoStepSolution {
    pub precoder: Precoder,
    pub report: RateReport,
    pub q: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eta: f64,
    pub rounds: usize,
}

struct PowerProblem<'a> {
    w: &'a [f64],
    gains: Vec<f64>,
    /// `cols[k][ℓ] = t_k^H Φ_ℓ t_k / γ_ℓ`.
    cols: Vec<Vec<f64>>,
}

impl PowerProblem<'_> {
    fn q_of(&self, lambda: &[f64]) -> Option<Vec<f64>> {
        let mut q = Vec::with_capacity(self.gains.len());
        for (k, g) in self.gains.iter().enumerate() {
            if *g <= 0.0 {
                q.push(0.0);
                continue;
            }
            let lc: f64 = lambda.iter().zip(&self.cols[k]).map(|(l, c)| l * c).sum();
            if lc <= 0.0 {
                return None;
            }
            q.push((self.w[k] / lc - 1.0 / g).max(0.0));
        }
        Some(q)
    }

    fn primal(&self, q: &[f64]) -> f64 {
        q.iter().zip(&self.gains).zip(self.w).map(|((q, g), w)| w * (1.0 + q * g).ln()).sum()
    }

    fn usage(&self, q: &[f64], l: usize) -> f64 {
        q.iter().zip(&self.cols).map(|(q, c)| q * c[l]).sum()
    }

    /// `D(λ) = L(q(λ), λ)` and its gradient `1 − C q(λ)`.
    fn dual(&self, lambda: &[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let q = self.q_of(lambda)?;
        let grad: Vec<f64> = (0..lambda.len()).map(|l| 1.0 - self.usage(&q, l)).collect();
        let val = self.primal(&q) + lambda.iter().zip(&grad).map(|(l, g)| l * g).sum::<f64>();
        Some((val, grad, q))
    }

    /// Largest feasible rescaling of `q`.
    fn feasible(&self, q: &[f64]) -> Vec<f64> {
        let worst = (0..self.cols.first().map_or(0, |c| c.len())).map(|l| self.usage(q, l)).fold(0.0, f64::max);
        if worst > 1.0 {
            q.iter().map(|x| x / worst * (1.0 - 1e-12)).collect()
        } else {
            q.to_vec()
        }
    }
}

/// Power allocation over the columns of `t`: waterfilling-like `q_k(λ)` with the
/// dual minimized by projected gradient descent (Armijo backtracking and
/// Barzilai-Borwein steps). The returned `q` is feasible.
pub fn power_step(instance: &Instance, t: &CMat, opts: &PowerOptions) -> Result<PowerSolution> {
    let h = instance.channels();
    if t.shape() != h.shape() {
        return Err(Error::DimensionMismatch("steering matrix must be M × K".into()));
    }
    let k_users = instance.users();
    let gains: Vec<f64> = (0..k_users).map(|k| h.column(k).dotc(&t.column(k)).norm_sqr()).collect();
    if gains.iter().all(|g| *g <= 0.0) {
        return Err(Error::DegenerateSteering);
    }
    let cols: Vec<Vec<f64>> = (0..k_users)
        .map(|k| {
            let tk = t.column(k).into_owned();
            instance.constraints().iter().map(|cst| cst.quad(&tk) / cst.gamma()).collect()
        })
        .collect();
    let prob = PowerProblem { w: instance.weights(), gains, cols };
    let n_cons = instance.constraints().len();

    // sum-power-only waterfilling level ignoring the positivity clip
    let wsum: f64 = prob.w.iter().zip(&prob.gains).filter(|(_, g)| **g > 0.0).map(|(w, _)| w).sum();
    let inv: f64 = prob.cols.iter().zip(&prob.gains).filter(|(_, g)| **g > 0.0).map(|(c, g)| c[0] / g).sum();
    let mut lambda = vec![0.0; n_cons];
    lambda[0] = wsum / (1.0 + inv);
    let (mut d, mut grad, mut q) = prob.dual(&lambda).ok_or(Error::DegenerateSteering)?;
    let mut step = 1.0 / (1.0 + grad.iter().map(|g| g * g).sum::<f64>().sqrt());
    let mut best = prob.feasible(&q);
    let mut best_val = prob.primal(&best);
    for _ in 0..opts.max_iterations {
        if d - best_val <= opts.gap * best_val.abs().max(1.0) {
            break;
        }
        let mut s = step;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = lambda.iter().zip(&grad).map(|(l, g)| (l - s * g).max(0.0)).collect();
            if let Some((dc, gc, qc)) = prob.dual(&cand) {
                let lin: f64 = grad.iter().zip(cand.iter().zip(&lambda)).map(|(g, (a, b))| g * (a - b)).sum();
                let dist: f64 = cand.iter().zip(&lambda).map(|(a, b)| (a - b) * (a - b)).sum();
                if dc <= d + lin + dist / (2.0 * s) {
                    accepted = Some((cand, dc, gc, qc));
                    break;
                }
            }
            s *= 0.5;
        }
        let Some((cand, dc, gc, qc)) = accepted else { break };
        let sl: Vec<f64> = cand.iter().zip(&lambda).map(|(a, b)| a - b).collect();
        let yl: Vec<f64> = gc.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = sl.iter().zip(&yl).map(|(a, b)| a * b).sum();
        let ss: f64 = sl.iter().map(|a| a * a).sum();
        step = if sy > 0.0 { ss / sy } else { s * 2.0 };
        lambda = cand;
        d = dc;
        grad = gc;
        q = qc;
        let feas = prob.feasible(&q);
        let val = prob.primal(&feas);
        if val > best_val {
            best_val = val;
            best = feas;
        }
    }
    Ok(PowerSolution { q: best, lambda, value: best_val, bound: d })
}

/// Steering step for fixed coefficients `a`: minimize the worst normalized usage
/// of `G·diag(a) + U⊥B` over `B`, then scale by `η = 1/max_ℓ √(usage_ℓ/γ_ℓ)`.
/// Returns `(B, η, ηT)`.
pub fn steering_step(instance: &Instance, geometry: &ZfGeometry, a: &[linalg::C64]) -> Result<(CMat, f64, CMat)> {
    let k_users = geometry.users();
    if a.len() != k_users {
        return Err(Error::DimensionMismatch("one coefficient per user".into()));
    }
    if a.iter().all(|x| x.norm() == 0.0) {
        return Err(Error::DegenerateSteering);
    }
    let mut f = geometry.g.clone();
    for (k, mut col) in f.column_iter_mut().enumerate() {
        col *= a[k];
    }
    let norms = instance.constraints().iter().map(|cst| (cst.phi().clone(), cst.gamma())).collect();
    let sol = socp_min_max_norm(&MinMaxProblem { f: f.clone(), n: geometry.u_perp.clone(), norms })?;
    let t = if geometry.u_perp.ncols() > 0 { f + &geometry.u_perp * &sol.b } else { f };
    let pre = Precoder::new(t.clone());
    let worst = instance
        .constraints()
        .iter()
        .zip(constraint_usage(instance, &pre))
        .map(|(cst, u)| u / cst.gamma())
        .fold(0.0, f64::max);
    if !(worst > 0.0) {
        return Err(Error::DegenerateSteering);
    }
    let eta = (1.0 - 1e-12) / worst.sqrt();
    Ok((sol.b, eta, t * c(eta, 0.0)))
}

fn row(instance: &Instance, pre: &Precoder, iteration: usize, boundary: bool) -> TraceRow {
    let report = zf_rates(instance, pre);
    TraceRow {
        iteration,
        t: None,
        objective: report.weighted_sum,
        residual_norm: f64::NAN,
        usage: report.usage,
        outer_boundary: boundary,
    }
}

/// Columns with zero power are replaced by the pseudo-inverse direction so the
/// next power step may allocate to them again.
fn revive(geometry: &ZfGeometry, t: &CMat, instance: &Instance) -> CMat {
    let mut out = t.clone();
    for k in 0..t.ncols() {
        if instance.channel(k).dotc(&t.column(k)).norm() == 0.0 {
            out.column_mut(k).copy_from(&geometry.g.column(k));
        }
    }
    out
}

/// Alternates power and steering steps from `T = G`, or from the rank-1
/// extraction of `warmstart` when given.
pub fn twostep_solve(
    instance: &Instance,
    opts: &TwoStepOptions,
    warmstart: Option<&RelaxSolution>,
) -> Result<(TwoStepSolution, ConvergenceTrace)> {
    let geometry = zf_geometry(instance)?;
    twostep_with_geometry(instance, &geometry, opts, warmstart)
}

pub fn twostep_with_geometry(
    instance: &Instance,
    geometry: &ZfGeometry,
    opts: &TwoStepOptions,
    warmstart: Option<&RelaxSolution>,
) -> Result<(TwoStepSolution, ConvergenceTrace)> {
    let mut t = match warmstart {
        Some(ws) => extract_from_relaxation(instance, geometry, &ws.a)?.matrix().clone(),
        None => geometry.g.clone(),
    };
    let mut trace = ConvergenceTrace::new(true);
    let mut iteration = 0;
    let mut prev = f64::NEG_INFINITY;
    let mut best: Option<TwoStepSolution> = None;
    for round in 1..=opts.max_rounds {
        t = revive(geometry, &t, instance);
        let power = power_step(instance, &t, &opts.power)?;
        let powered = Precoder::from_directions(&t, &power.q);
        iteration += 1;
        trace.push(row(instance, &powered, iteration, false));

        // a_k = √q_k g_k^H t_k
        let a: Vec<linalg::C64> =
            (0..instance.users()).map(|k| geometry.g.column(k).dotc(&powered.column(k))).collect();
        let (_, eta, t_new) = match steering_step(instance, geometry, &a) {
            Ok(v) => v,
            Err(Error::DegenerateSteering) => (CMat::zeros(0, 0), 1.0, powered.matrix().clone()),
            Err(e) => return Err(e),
        };
        let steered = Precoder::new(t_new.clone());
        let report = zf_rates(instance, &steered);
        iteration += 1;
        trace.push(row(instance, &steered, iteration, true));
        let value = report.weighted_sum;
        if best.as_ref().is_none_or(|b| value >= b.report.weighted_sum) {
            best = Some(TwoStepSolution {
                precoder: steered.clone(),
                report,
                q: power.q.clone(),
                lambda: power.lambda.clone(),
                eta,
                rounds: round,
            });
        }
        let done = (value - prev).abs() <= opts.tol * value.abs().max(1e-12);
        prev = value;
        t = t_new;
        if done {
            break;
        }
    }
    Ok((best.expect("at least one round"), trace))
}
