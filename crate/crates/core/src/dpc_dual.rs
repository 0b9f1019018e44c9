//! Inner-outer DPC solver: projected-gradient solution of the dual-MAC WSRM for
//! fixed multipliers λ (inner), subgradient descent on λ (outer), and the
//! MAC-to-BC map shared with the Newton solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, project_simplex};
use crate::mac::SortedMac;
use crate::model::{constraint_usage, dpc_rates, Instance, Precoder, RateReport};
use crate::trace::{ConvergenceTrace, TraceRow};

/// Solution of a DPC solver, in original user order.
#[derive(Debug, Clone)]
pub struct DualSolution {
    /// Dual-MAC powers.
    pub p: Vec<f64>,
    /// Multipliers of all constraints, index 0 being the sum power.
    pub lambda: Vec<f64>,
    /// Multiplier of the dual sum-power coupling (Newton) or of the inner budget.
    pub mu: f64,
    pub precoder: Precoder,
    /// BC encoding order (first entry encoded first).
    pub encoding_order: Vec<usize>,
    pub report: RateReport,
    pub mac_rates: Vec<f64>,
}

impl DualSolution {
    pub fn weighted_sum(&self) -> f64 {
        self.report.weighted_sum
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerOptions {
    /// Relative tolerance on the Frank-Wolfe duality gap of the inner problem.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iterations: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    /// Optimal powers (original order).
    pub p: Vec<f64>,
    /// `g(λ)`.
    pub value: f64,
    /// Budget multiplier `∂g/∂(Σλγ)` at the optimum.
    pub mu: f64,
    pub iterations: usize,
}

/// `g(λ)`: weighted-sum-rate optimum of the dual MAC with noise `Σ λ_ℓ Φ_ℓ` and
/// power budget `Σ λ_ℓ γ_ℓ`. `lambda` covers all constraints, index 0 = sum power.
pub fn inner_wsrm(instance: &Instance, lambda: &[f64]) -> Result<InnerSolution> {
    let mac = SortedMac::new(instance);
    let (sol, _) = inner_sorted(&mac, instance, lambda, None, &InnerOptions::default(), &mut |_, _| {})?;
    Ok(InnerSolution { p: mac.to_original(&sol.p), ..sol })
}

fn check_lambda(instance: &Instance, lambda: &[f64]) -> Result<()> {
    if lambda.len() != instance.constraints().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} multipliers for {} constraints",
            lambda.len(),
            instance.constraints().len()
        )));
    }
    if lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::Domain("multipliers must be nonnegative".into()));
    }
    Ok(())
}

/// Inner solve in sorted order. Returns the solution (sorted `p`) and the final Ψ's.
fn inner_sorted(
    mac: &SortedMac,
    instance: &Instance,
    lambda: &[f64],
    warm: Option<&[f64]>,
    opts: &InnerOptions,
    on_iter: &mut dyn FnMut(&[f64], f64),
) -> Result<(InnerSolution, Vec<linalg::CMat>)> {
    check_lambda(instance, lambda)?;
    let k_users = mac.users();
    let budget: f64 = instance.budgets().iter().zip(lambda).map(|(g, l)| g * l).sum();
    let noise = mac.noise(instance, lambda);
    if budget <= 0.0 {
        let p = vec![0.0; k_users];
        let psis = mac.psis(&noise, &p).unwrap_or_default();
        return Ok((InnerSolution { p, value: 0.0, mu: 0.0, iterations: 0 }, psis));
    }
    let mut p = match warm {
        Some(w) if w.iter().sum::<f64>() > 0.0 => {
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x * budget / s).collect()
        }
        _ => vec![budget / k_users as f64; k_users],
    };
    let mut psis = mac.psis(&noise, &p)?;
    let mut f = mac.weighted_rate(&noise, &p)?;
    let mut grad = mac.rate_gradient(&psis);
    let gmax = grad.iter().cloned().fold(0.0, f64::max);
    let mut step = budget / gmax.max(1e-300);
    let mut iterations = 0;
    loop {
        let dot: f64 = grad.iter().zip(&p).map(|(g, x)| g * x).sum();
        let gmax = grad.iter().cloned().fold(f64::MIN, f64::max);
        let gap = budget * gmax - dot;
        on_iter(&p, f);
        if gap <= opts.tol * f.abs().max(1.0) {
            let mu = dot / budget;
            return Ok((InnerSolution { p, value: f, mu, iterations }, psis));
        }
        if iterations >= opts.max_iterations {
            return Err(Error::MaxIterations { solver: "inner_wsrm", iterations });
        }
        iterations += 1;
        let mut s = step;
        let (p_new, f_new) = loop {
            let trial: Vec<f64> = p.iter().zip(&grad).map(|(x, g)| x + s * g).collect();
            let cand = project_simplex(&trial, budget);
            let f_c = mac.weighted_rate(&noise, &cand)?;
            let lin: f64 = grad.iter().zip(cand.iter().zip(&p)).map(|(g, (a, b))| g * (a - b)).sum();
            if f_c >= f + 1e-4 * lin || lin <= 1e-16 * f.abs().max(1.0) {
                break (cand, f_c);
            }
            s *= 0.5;
            if s < 1e-30 * budget {
                return Err(Error::LineSearchStall { solver: "inner_wsrm" });
            }
        };
        let psis_new = mac.psis(&noise, &p_new)?;
        let grad_new = mac.rate_gradient(&psis_new);
        // Barzilai-Borwein step for the next iteration
        let dp: Vec<f64> = p_new.iter().zip(&p).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = dp.iter().zip(&dg).map(|(a, b)| a * b).sum();
        let ss: f64 = dp.iter().map(|a| a * a).sum();
        step = if sy < 0.0 { ss / -sy } else { s * 2.0 };
        p = p_new;
        f = f_new;
        psis = psis_new;
        grad = grad_new;
    }
}

/// MAC-to-BC transformation at multipliers `lambda` (all constraints) and dual-MAC
/// powers `p` (original order). The BC encoding order is the weight order.
pub fn mac_to_bc(instance: &Instance, lambda: &[f64], p: &[f64]) -> Result<Precoder> {
    check_lambda(instance, lambda)?;
    if p.len() != instance.users() || p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Domain("powers must be nonnegative, one per user".into()));
    }
    let mac = SortedMac::new(instance);
    let ps = mac.to_sorted(p);
    let psis = mac.psis(&mac.noise(instance, lambda), &ps)?;
    mac.to_bc(&psis, &ps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgradientOptions {
    pub eps0: f64,
    pub b: f64,
    /// Complementary-slackness tolerance of the outer stopping test.
    pub tol: f64,
    pub max_outer: usize,
    pub inner: InnerOptions,
    /// Record every inner iteration in the trace (BC usages computed uncounted).
    pub trace_inner: bool,
    /// Start each inner solve from the previous outer iterate's powers.
    pub warm_start: bool,
}

impl Default for SubgradientOptions {
    fn default() -> Self {
        Self { eps0: 0.5, b: 5.0, tol: 1e-3, max_outer: 5000, inner: InnerOptions::default(), trace_inner: true, warm_start: false }
    }
}

/// `ε_n = ε₀ (1+b)/(n+b)`, with steps counted from `n = 1`.
pub fn step_size(eps0: f64, b: f64, n: usize) -> f64 {
    eps0 * (1.0 + b) / (n as f64 + b)
}

/// `s_ℓ = γ_ℓ − tr(Σx Φ_ℓ)`.
pub fn subgradient(instance: &Instance, precoder: &Precoder) -> Vec<f64> {
    instance.budgets().iter().zip(constraint_usage(instance, precoder)).map(|(g, u)| g - u).collect()
}

/// Inner-outer solver. Returns the best feasible (scaled into the constraint set)
/// BC solution seen and a trace with one row per inner iteration.
pub fn outer_subgradient_solve(
    instance: &Instance,
    opts: &SubgradientOptions,
) -> Result<(DualSolution, ConvergenceTrace)> {
    let start = linalg::matmul_count();
    let mac = SortedMac::new(instance);
    let budgets = instance.budgets();
    let n_cons = budgets.len();
    let mut lambda = vec![1.0; n_cons];
    let mut warm: Option<Vec<f64>> = None;
    let mut trace = ConvergenceTrace::new(true);
    let mut best: Option<DualSolution> = None;
    let order = mac.encoding_order();
    let mut iteration = 0;

    for n in 0..opts.max_outer {
        let lam_now = lambda.clone();
        let mut record = |p: &[f64], f: f64| {
            if opts.trace_inner {
                let usage = linalg::uncounted(|| {
                    let noise = mac.noise(instance, &lam_now);
                    mac.psis(&noise, p)
                        .and_then(|psis| mac.to_bc(&psis, p))
                        .map(|pre| constraint_usage(instance, &pre))
                        .unwrap_or_default()
                });
                trace.push(TraceRow {
                    iteration,
                    t: None,
                    objective: f,
                    residual_norm: f64::NAN,
                    usage,
                    outer_boundary: false,
                });
            }
            iteration += 1;
        };
        let (inner, psis) = inner_sorted(&mac, instance, &lambda, warm.as_deref(), &opts.inner, &mut record)?;
        let precoder = mac.to_bc(&psis, &inner.p)?;
        let s = subgradient(instance, &precoder);
        let usage: Vec<f64> = budgets.iter().zip(&s).map(|(g, si)| g - si).collect();
        let snorm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        if let Some(last) = trace.rows.last_mut().filter(|_| opts.trace_inner) {
            last.usage = usage.clone();
            last.residual_norm = snorm;
            last.outer_boundary = true;
        } else {
            trace.push(TraceRow {
                iteration,
                t: None,
                objective: inner.value,
                residual_norm: snorm,
                usage: usage.clone(),
                outer_boundary: true,
            });
        }

        let feasible = precoder.restored(instance);
        let report = dpc_rates(instance, &feasible, &order)?;
        if best.as_ref().is_none_or(|b| report.weighted_sum > b.report.weighted_sum) {
            best = Some(DualSolution {
                p: mac.to_original(&inner.p),
                lambda: lambda.clone(),
                mu: inner.mu,
                precoder: feasible,
                encoding_order: order.clone(),
                report,
                mac_rates: mac.to_original(&mac.mac_rates(&psis, &inner.p)),
            });
        }

        let total: f64 = budgets.iter().zip(&lambda).map(|(g, l)| g * l).sum();
        let converged = s.iter().zip(&budgets).zip(&lambda).all(|((si, g), l)| {
            let rel = si / g;
            rel >= -opts.tol && (l * g / total) * rel.abs() <= opts.tol
        });
        if converged {
            trace.matmuls = linalg::matmul_count() - start;
            return Ok((best.expect("at least one iterate"), trace));
        }

        let eps = step_size(opts.eps0, opts.b, n + 1);
        for (l, si) in lambda.iter_mut().zip(&s) {
            *l = (*l - eps * si).max(0.0);
        }
        // keep Σz(λ) nonsingular
        let lmax = lambda.iter().cloned().fold(0.0, f64::max);
        lambda[0] = lambda[0].max(1e-6 * lmax.max(1e-12));
        if opts.warm_start {
            warm = Some(inner.p);
        }
    }
    Err(Error::MaxIterations { solver: "outer_subgradient", iterations: opts.max_outer })
}
