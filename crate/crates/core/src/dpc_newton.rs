//! Primal-dual Newton solver for the DPC weighted-sum-rate problem under linear
//! transmit covariance constraints, working on the joint dual-MAC powers `p`,
//! constraint multipliers `λ` (sum-power multiplier fixed to one) and the
//! coupling multiplier `μ` of `1ᵀp = P + γᵀλ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dpc_dual::DualSolution;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::mac::SortedMac;
use crate::model::{constraint_usage, dpc_rates, Instance, Precoder};
use crate::trace::{ConvergenceTrace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Barrier growth factor.
    pub nu: f64,
    /// Residual tolerance of the inner loop and duality-gap tolerance of the outer loop.
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub t0: f64,
    pub max_iterations: usize,
    /// Fall back to the reduced-space globalization when the full iteration stalls
    /// or runs away.
    pub globalize: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { nu: 10.0, delta: 1e-6, alpha: 0.3, beta: 0.8, t0: 1.0, max_iterations: 500, globalize: true }
    }
}

/// Point of the primal-dual iteration, `p` in weight-sorted order, `lambda`
/// excluding the sum-power multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonPoint {
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: f64,
}

struct Problem<'a> {
    mac: SortedMac,
    instance: &'a Instance,
    gamma: Vec<f64>,
    power: f64,
}

/// `Ψ Φ` kept in factored form `(Ψc) c^H` for rank-1 constraints.
enum PsiPhi {
    Rank1 { psi_c: CVec, c: CVec },
    Dense(CMat),
}

impl PsiPhi {
    /// `Re tr(Ψ Φ_a Ψ Φ_b)`.
    fn trace_pair(a: &PsiPhi, b: &PsiPhi) -> f64 {
        match (a, b) {
            (PsiPhi::Rank1 { psi_c: pa, c: ca }, PsiPhi::Rank1 { psi_c: pb, c: cb }) => {
                (cb.dotc(pa) * ca.dotc(pb)).re
            }
            (PsiPhi::Rank1 { psi_c, c }, PsiPhi::Dense(d)) | (PsiPhi::Dense(d), PsiPhi::Rank1 { psi_c, c }) => {
                c.dotc(&(d * psi_c)).re
            }
            (PsiPhi::Dense(a), PsiPhi::Dense(b)) => linalg::trace_product(a, b).re,
        }
    }
}

/// Quantities at one point: Ψ's, residual and the barrier-free objective.
struct Eval {
    psis: Vec<CMat>,
    residual: DVector<f64>,
    objective: f64,
}

impl<'a> Problem<'a> {
    fn new(instance: &'a Instance) -> Self {
        let budgets = instance.budgets();
        Self { mac: SortedMac::new(instance), instance, gamma: budgets[1..].to_vec(), power: budgets[0] }
    }

    fn users(&self) -> usize {
        self.mac.users()
    }

    fn full_lambda(&self, lambda: &[f64]) -> Vec<f64> {
        std::iter::once(1.0).chain(lambda.iter().copied()).collect()
    }

    fn phi(&self, j: usize) -> &CMat {
        self.instance.constraints()[j + 1].phi()
    }

    fn psi_phi(&self, psi: &CMat, j: usize) -> PsiPhi {
        match self.instance.constraints()[j + 1].direction() {
            Some(cv) => PsiPhi::Rank1 { psi_c: psi * cv, c: cv.clone() },
            None => PsiPhi::Dense(linalg::mm(psi, self.phi(j))),
        }
    }

    fn eval(&self, x: &NewtonPoint, t: f64) -> Result<Eval> {
        let k_users = self.users();
        let n_l = self.gamma.len();
        let mac = &self.mac;
        let noise = mac.noise(self.instance, &self.full_lambda(&x.lambda));
        let psis = mac.psis(&noise, &x.p)?;
        let objective = linalg::uncounted(|| mac.weighted_rate(&noise, &x.p))?;
        let grad = mac.rate_gradient(&psis);
        let mut r = DVector::zeros(k_users + n_l + 1);
        for i in 0..k_users {
            r[i] = grad[i] + 1.0 / (t * x.p[i]) - x.mu;
        }
        for j in 0..n_l {
            let cst = &self.instance.constraints()[j + 1];
            let tr = |psi: &CMat| match cst.direction() {
                Some(cv) => linalg::quad_form(psi, cv),
                None => linalg::trace_product(psi, cst.phi()).re,
            };
            let mut d = -mac.w[0] * tr(&psis[0]);
            for k in 0..k_users {
                if mac.delta[k] != 0.0 {
                    d += mac.delta[k] * tr(&psis[k + 1]);
                }
            }
            r[k_users + j] = d - 1.0 / (t * x.lambda[j]) + x.mu * self.gamma[j];
        }
        let gl: f64 = self.gamma.iter().zip(&x.lambda).map(|(g, l)| g * l).sum();
        r[k_users + n_l] = self.power + gl - x.p.iter().sum::<f64>();
        Ok(Eval { psis, residual: r, objective })
    }

    fn kkt_matrix(&self, x: &NewtonPoint, psis: &[CMat], t: f64) -> DMatrix<f64> {
        let k_users = self.users();
        let n_l = self.gamma.len();
        let n = k_users + n_l + 1;
        let mac = &self.mac;
        let mut j_mat = DMatrix::zeros(n, n);

        // p-p block
        for k in 0..k_users {
            if mac.delta[k] == 0.0 {
                continue;
            }
            let psi_h: Vec<_> = (0..=k).map(|l| &psis[k + 1] * &mac.h[l]).collect();
            for i in 0..=k {
                for l in 0..=i {
                    let v = mac.delta[k] * mac.h[i].dotc(&psi_h[l]).norm_sqr();
                    j_mat[(i, l)] -= v;
                    if i != l {
                        j_mat[(l, i)] -= v;
                    }
                }
            }
        }
        for i in 0..k_users {
            j_mat[(i, i)] -= 1.0 / (t * x.p[i] * x.p[i]);
        }

        if n_l > 0 {
            for k in 0..=k_users {
                let coef = if k == 0 { -mac.w[0] } else { mac.delta[k - 1] };
                if coef == 0.0 {
                    continue;
                }
                let psi = &psis[k];
                let factors: Vec<PsiPhi> = (0..n_l).map(|j| self.psi_phi(psi, j)).collect();
                for j in 0..n_l {
                    for m in 0..=j {
                        let v = coef * PsiPhi::trace_pair(&factors[m], &factors[j]);
                        j_mat[(k_users + j, k_users + m)] -= v;
                        if j != m {
                            j_mat[(k_users + m, k_users + j)] -= v;
                        }
                    }
                }
                // h_i^H Ψ_k Φ_j Ψ_k h_i for the users i ≤ k
                for i in 0..k {
                    let psi_h = psi * &mac.h[i];
                    for j in 0..n_l {
                        let v = coef * self.instance.constraints()[j + 1].quad(&psi_h);
                        j_mat[(i, k_users + j)] -= v;
                        j_mat[(k_users + j, i)] -= v;
                    }
                }
            }
            for j in 0..n_l {
                j_mat[(k_users + j, k_users + j)] += 1.0 / (t * x.lambda[j] * x.lambda[j]);
            }
        }

        // border (−1, γ, 0)
        for i in 0..k_users {
            j_mat[(i, n - 1)] = -1.0;
            j_mat[(n - 1, i)] = -1.0;
        }
        for j in 0..n_l {
            j_mat[(k_users + j, n - 1)] = self.gamma[j];
            j_mat[(n - 1, k_users + j)] = self.gamma[j];
        }
        j_mat
    }
}

fn solve_kkt(mut j_mat: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(d) = j_mat.clone().lu().solve(rhs).filter(|d| d.iter().all(|v| v.is_finite())) {
        return Ok(d);
    }
    for i in 0..j_mat.nrows() {
        j_mat[(i, i)] += 1e-10;
    }
    j_mat.lu().solve(rhs).filter(|d| d.iter().all(|v| v.is_finite())).ok_or(Error::SingularKkt)
}

/// Barrier-augmented saddle function `f_t(p, λ)` at a sorted-order point.
pub fn barrier_objective(instance: &Instance, x: &NewtonPoint, t: f64) -> Result<f64> {
    let prob = Problem::new(instance);
    if x.p.iter().chain(&x.lambda).any(|v| *v <= 0.0) {
        return Err(Error::Domain("barrier needs strictly positive p and λ".into()));
    }
    let noise = prob.mac.noise(instance, &prob.full_lambda(&x.lambda));
    let f = prob.mac.weighted_rate(&noise, &x.p)?;
    let lp: f64 = x.p.iter().map(|v| v.ln()).sum();
    let ll: f64 = x.lambda.iter().map(|v| v.ln()).sum();
    Ok(f + (lp - ll) / t)
}

/// Residual `(r₁, r₂, r₃)` of the barrier KKT system.
pub fn kkt_residual(instance: &Instance, x: &NewtonPoint, t: f64) -> Result<Vec<f64>> {
    let prob = Problem::new(instance);
    Ok(prob.eval(x, t)?.residual.iter().copied().collect())
}

/// Jacobian of [`kkt_residual`] with respect to `(p, λ, μ)`.
pub fn kkt_matrix(instance: &Instance, x: &NewtonPoint, t: f64) -> Result<DMatrix<f64>> {
    let prob = Problem::new(instance);
    let e = prob.eval(x, t)?;
    Ok(prob.kkt_matrix(x, &e.psis, t))
}

/// Rejects end points whose recovered precoder violates a budget, or whose
/// multipliers carry most of the dual power budget on constraints the precoder
/// leaves slack. The residual also vanishes along rays `p, λ → ∞`, so a small
/// residual alone is not enough.
fn check_slackness(prob: &Problem, x: &NewtonPoint, pre: &Precoder) -> Result<()> {
    let usage = linalg::uncounted(|| constraint_usage(prob.instance, pre));
    if usage.iter().zip(prob.instance.budgets()).any(|(u, g)| *u > g * (1.0 + 1e-3)) {
        return Err(Error::Diverged { solver: "dpc_newton" });
    }
    let budget = prob.power + prob.gamma.iter().zip(&x.lambda).map(|(g, l)| g * l).sum::<f64>();
    for (j, (g, l)) in prob.gamma.iter().zip(&x.lambda).enumerate() {
        let slack = (1.0 - usage[j + 1] / g).max(0.0);
        if l * g * slack > 1e-2 * budget {
            return Err(Error::Diverged { solver: "dpc_newton" });
        }
    }
    Ok(())
}

/// Initial point `p = P/K`, `λℓ = 1/tr Φℓ`, `μ = 1` (sorted order).
pub fn initial_point(instance: &Instance) -> NewtonPoint {
    let k = instance.users();
    NewtonPoint {
        p: vec![instance.sum_power() / k as f64; k],
        lambda: instance.constraints()[1..].iter().map(|cst| 1.0 / cst.phi().trace().re).collect(),
        mu: 1.0,
    }
}

/// Runs the primal-dual Newton method from the default starting point.
pub fn newton_solve(instance: &Instance, opts: &NewtonOptions) -> Result<(DualSolution, ConvergenceTrace)> {
    newton_solve_from(instance, initial_point(instance), opts)
}

pub fn newton_solve_from(
    instance: &Instance,
    start: NewtonPoint,
    opts: &NewtonOptions,
) -> Result<(DualSolution, ConvergenceTrace)> {
    let count0 = linalg::matmul_count();
    let prob = Problem::new(instance);
    if start.p.len() != prob.users() || start.lambda.len() != prob.gamma.len() {
        return Err(Error::DimensionMismatch("starting point does not match the instance".into()));
    }
    if start.p.iter().chain(&start.lambda).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("starting point must be strictly positive".into()));
    }
    let mut trace = ConvergenceTrace::new(true);
    let full = full_newton(&prob, start.clone(), opts, &mut trace).and_then(|(x, ev)| {
        let raw = prob.mac.to_bc(&ev.psis, &x.p)?;
        check_slackness(&prob, &x, &raw)?;
        Ok((x, ev, raw))
    });
    let (x, ev, raw) = match full {
        Ok(v) => v,
        Err(Error::LineSearchStall { .. } | Error::Diverged { .. } | Error::SingularKkt | Error::MaxIterations { .. })
            if opts.globalize =>
        {
            trace = ConvergenceTrace::new(true);
            let (x, ev) = reduced_newton(&prob, start, opts, &mut trace)?;
            let raw = prob.mac.to_bc(&ev.psis, &x.p)?;
            check_slackness(&prob, &x, &raw)?;
            (x, ev, raw)
        }
        Err(e) => return Err(e),
    };

    let precoder = raw.restored(instance);
    let order = prob.mac.encoding_order();
    let report = dpc_rates(instance, &precoder, &order)?;
    let mac_rates = prob.mac.to_original(&prob.mac.mac_rates(&ev.psis, &x.p));
    trace.matmuls = linalg::matmul_count() - count0;
    Ok((
        DualSolution {
            p: prob.mac.to_original(&x.p),
            lambda: prob.full_lambda(&x.lambda),
            mu: x.mu,
            precoder,
            encoding_order: order,
            report,
            mac_rates,
        },
        trace,
    ))
}

fn trace_row(prob: &Problem, x: &NewtonPoint, ev: &Eval, iteration: usize, t: f64) -> TraceRow {
    let usage = linalg::uncounted(|| {
        prob.mac.to_bc(&ev.psis, &x.p).map(|pre| constraint_usage(prob.instance, &pre)).unwrap_or_default()
    });
    TraceRow {
        iteration,
        t: Some(t),
        objective: ev.objective,
        residual_norm: ev.residual.norm(),
        usage,
        outer_boundary: false,
    }
}

fn mark_boundary(trace: &mut ConvergenceTrace) {
    if let Some(last) = trace.rows.last_mut() {
        last.outer_boundary = true;
    }
}

/// Newton on the full KKT system with backtracking on the residual norm.
fn full_newton(
    prob: &Problem,
    start: NewtonPoint,
    opts: &NewtonOptions,
    trace: &mut ConvergenceTrace,
) -> Result<(NewtonPoint, Eval)> {
    let k_users = prob.users();
    let n_l = prob.gamma.len();
    let m_barrier = (k_users + n_l) as f64;
    let mut x = start;
    let mut t = opts.t0;
    let mut ev = prob.eval(&x, t)?;
    let mut iterations = 0;
    trace.push(trace_row(prob, &x, &ev, 0, t));

    loop {
        while ev.residual.norm() > opts.delta {
            if iterations >= opts.max_iterations {
                return Err(Error::MaxIterations { solver: "dpc_newton", iterations });
            }
            iterations += 1;
            let d = solve_kkt(prob.kkt_matrix(&x, &ev.psis, t), &(-&ev.residual))?;
            let mut s: f64 = 1.0;
            let inside = |s: f64| {
                (0..k_users).all(|i| x.p[i] + s * d[i] > 0.0)
                    && (0..n_l).all(|j| x.lambda[j] + s * d[k_users + j] > 0.0)
                    && x.mu + s * d[k_users + n_l] > 0.0
            };
            while !inside(s) {
                s *= opts.beta;
            }
            let r0 = ev.residual.norm();
            let (xn, evn) = loop {
                if s < 1e-12 {
                    return Err(Error::LineSearchStall { solver: "dpc_newton" });
                }
                let cand = NewtonPoint {
                    p: (0..k_users).map(|i| x.p[i] + s * d[i]).collect(),
                    lambda: (0..n_l).map(|j| x.lambda[j] + s * d[k_users + j]).collect(),
                    mu: x.mu + s * d[k_users + n_l],
                };
                match prob.eval(&cand, t) {
                    Ok(e) if e.residual.norm() <= (1.0 - opts.alpha * s) * r0 => break (cand, e),
                    _ => s *= opts.beta,
                }
            };
            x = xn;
            ev = evn;
            trace.push(trace_row(prob, &x, &ev, iterations, t));
        }
        mark_boundary(trace);
        if m_barrier / t <= opts.delta {
            return Ok((x, ev));
        }
        t *= opts.nu;
        ev = prob.eval(&x, t)?;
    }
}

/// Maximizes `F(p, λ) + (1/t) Σ log p` over `1ᵀp = P + γᵀλ` for fixed `λ` by
/// feasible-start Newton. Returns the centered point (with its multiplier `μ`),
/// its evaluation and the attained value.
fn center_powers(prob: &Problem, lambda: &[f64], p0: &[f64], t: f64) -> Result<(NewtonPoint, Eval, f64)> {
    let k_users = prob.users();
    let budget = prob.power + prob.gamma.iter().zip(lambda).map(|(g, l)| g * l).sum::<f64>();
    let s0: f64 = p0.iter().sum();
    let noise = prob.mac.noise(prob.instance, &prob.full_lambda(lambda));
    let value = |p: &[f64]| -> Result<f64> {
        Ok(prob.mac.weighted_rate(&noise, p)? + p.iter().map(|v| v.ln()).sum::<f64>() / t)
    };
    let mut x = NewtonPoint { p: p0.iter().map(|v| v * budget / s0).collect(), lambda: lambda.to_vec(), mu: 0.0 };
    let mut f = value(&x.p)?;
    for _ in 0..100 {
        let ev = prob.eval(&x, t)?;
        let grad: Vec<f64> = (0..k_users).map(|i| ev.residual[i] + x.mu).collect();
        let j = prob.kkt_matrix(&x, &ev.psis, t);
        let mut a = DMatrix::zeros(k_users + 1, k_users + 1);
        let mut rhs = DVector::zeros(k_users + 1);
        for i in 0..k_users {
            for l in 0..k_users {
                a[(i, l)] = j[(i, l)];
            }
            a[(i, k_users)] = 1.0;
            a[(k_users, i)] = 1.0;
            rhs[i] = -grad[i];
        }
        let sol = solve_kkt(a, &rhs)?;
        let dp: Vec<f64> = (0..k_users).map(|i| sol[i]).collect();
        x.mu = -sol[k_users];
        let slope: f64 = grad.iter().zip(&dp).map(|(g, d)| g * d).sum();
        let stationarity = grad.iter().map(|g| (g - x.mu).powi(2)).sum::<f64>().sqrt();
        if slope <= 1e-15 * f.abs().max(1.0) || stationarity <= 1e-12 * x.mu.abs().max(1.0) {
            let ev = prob.eval(&x, t)?;
            return Ok((x, ev, f));
        }
        let mut s = 1.0;
        while (0..k_users).any(|i| x.p[i] + s * dp[i] <= 0.0) {
            s *= 0.5;
        }
        loop {
            let cand: Vec<f64> = (0..k_users).map(|i| x.p[i] + s * dp[i]).collect();
            let fc = value(&cand)?;
            if fc >= f + 0.25 * s * slope {
                x.p = cand;
                f = fc;
                break;
            }
            s *= 0.5;
            if s < 1e-14 {
                let ev = prob.eval(&x, t)?;
                return Ok((x, ev, f));
            }
        }
    }
    let ev = prob.eval(&x, t)?;
    Ok((x, ev, f))
}

/// The same barrier path, globalized in the reduced space of `λ`: powers are
/// recentered for every trial `λ`, the `λ` step is the corresponding block of the
/// full KKT solve, and steps are accepted on the convex value
/// `G(λ) = max_p [F + (1/t) Σ log p] − (1/t) Σ log λ`, whose gradient is `r₂`.
fn reduced_newton(
    prob: &Problem,
    start: NewtonPoint,
    opts: &NewtonOptions,
    trace: &mut ConvergenceTrace,
) -> Result<(NewtonPoint, Eval)> {
    let k_users = prob.users();
    let n_l = prob.gamma.len();
    let m_barrier = (k_users + n_l) as f64;
    let mut t = opts.t0;
    let g_of = |lambda: &[f64], f: f64, t: f64| f - lambda.iter().map(|l| l.ln()).sum::<f64>() / t;
    let (mut x, mut ev, f) = center_powers(prob, &start.lambda, &start.p, t)?;
    let mut g = g_of(&x.lambda, f, t);
    let mut iterations = 0;
    trace.push(trace_row(prob, &x, &ev, 0, t));

    loop {
        while ev.residual.norm() > opts.delta {
            if iterations >= opts.max_iterations {
                return Err(Error::MaxIterations { solver: "dpc_newton", iterations });
            }
            iterations += 1;
            let grad: Vec<f64> = (0..n_l).map(|j| ev.residual[k_users + j]).collect();
            let d = solve_kkt(prob.kkt_matrix(&x, &ev.psis, t), &(-&ev.residual))?;
            let mut dl: Vec<f64> = (0..n_l).map(|j| d[k_users + j]).collect();
            let mut slope: f64 = grad.iter().zip(&dl).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                // gradient step in the metric of the λ barrier
                dl = grad.iter().zip(&x.lambda).map(|(v, l)| -t * l * l * v).collect();
                slope = grad.iter().zip(&dl).map(|(a, b)| a * b).sum();
            }
            let r0 = ev.residual.norm();
            let mut s: f64 = 1.0;
            while (0..n_l).any(|j| x.lambda[j] + s * dl[j] <= 0.0) {
                s *= opts.beta;
            }
            let trial = |s: f64| {
                let lambda: Vec<f64> = (0..n_l).map(|j| x.lambda[j] + s * dl[j]).collect();
                if lambda.iter().any(|l| !(*l > 0.0)) {
                    return None;
                }
                let warm: Vec<f64> = (0..k_users).map(|i| (x.p[i] + s * d[i]).max(0.5 * x.p[i])).collect();
                let (xc, evc, fc) = center_powers(prob, &lambda, &warm, t).ok()?;
                let gc = g_of(&lambda, fc, t);
                Some((xc, evc, gc))
            };
            let (mut xn, mut evn, mut gn) = loop {
                if s < 1e-12 {
                    return Err(Error::LineSearchStall { solver: "dpc_newton" });
                }
                if let Some((xc, evc, gc)) = trial(s) {
                    if gc <= g + opts.alpha * s * slope || evc.residual.norm() <= (1.0 - opts.alpha * s) * r0 {
                        break (xc, evc, gc);
                    }
                }
                s *= opts.beta;
            };
            // G can be nearly flat along the step, making the Newton step far too short
            if s == 1.0 && gn - g < 0.75 * slope {
                while s < 1e6 {
                    s *= 2.0;
                    match trial(s) {
                        Some((xc, evc, gc)) if gc < gn => (xn, evn, gn) = (xc, evc, gc),
                        _ => break,
                    }
                }
            }
            x = xn;
            ev = evn;
            g = gn;
            trace.push(trace_row(prob, &x, &ev, iterations, t));
        }
        mark_boundary(trace);
        if m_barrier / t <= opts.delta {
            return Ok((x, ev));
        }
        t *= opts.nu;
        let (xc, evc, f) = center_powers(prob, &x.lambda, &x.p, t)?;
        x = xc;
        ev = evc;
        g = g_of(&x.lambda, f, t);
    }
}
