//! Barrier gradient ascent on the dimension-reduced convex relaxation of ZF
//! beamforming: one `(M−K+1)`-square Hermitian matrix `A_k` per user with
//! `T_k = U_k A_k U_k^H`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::model::{Instance, Precoder};
use crate::trace::{ConvergenceTrace, TraceRow};
use crate::zf_core::{extract_from_relaxation, zf_geometry, ZfGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientOptions {
    pub alpha: f64,
    pub beta: f64,
    /// Inner stopping threshold on `s·‖D‖` (lower triangles).
    pub delta: f64,
    pub nu: f64,
    pub t0: f64,
    /// Outer stop once the barrier gap bound `m/t` falls below this.
    pub gap: f64,
    pub max_iterations: usize,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self { alpha: 0.1, beta: 0.5, delta: 1e-5, nu: 5.0, t0: 1.0, gap: 1e-4, max_iterations: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxState {
    pub a: Vec<CMat>,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct RelaxSolution {
    pub a: Vec<CMat>,
    pub t: f64,
    /// `Σ W_k log(1 + d_k [A_k]₁₁)` without barrier terms.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `γ_ℓ − Σ_k tr(A_k Φ̃_{ℓ,k})`.
pub fn relax_slacks(instance: &Instance, geometry: &ZfGeometry, a: &[CMat]) -> Vec<f64> {
    instance
        .constraints()
        .iter()
        .zip(&geometry.reduced)
        .map(|(cst, red)| cst.gamma() - a.iter().zip(red).map(|(ak, p)| linalg::trace_product(ak, p).re).sum::<f64>())
        .collect()
}

/// `Σ W_k log(1 + d_k [A_k]₁₁)`.
pub fn relax_rate(instance: &Instance, geometry: &ZfGeometry, a: &[CMat]) -> f64 {
    a.iter().zip(&geometry.d).zip(instance.weights()).map(|((ak, d), w)| w * (1.0 + d * ak[(0, 0)].re).ln()).sum()
}

fn check_shapes(geometry: &ZfGeometry, state: &RelaxState) -> Result<()> {
    let n = geometry.reduced_dim();
    if state.a.len() != geometry.users() || state.a.iter().any(|a| a.shape() != (n, n)) {
        return Err(Error::DimensionMismatch(format!("expected {} matrices of size {n}", geometry.users())));
    }
    Ok(())
}

/// Barrier objective `f_t`; domain violations are errors.
pub fn relax_objective(instance: &Instance, geometry: &ZfGeometry, state: &RelaxState) -> Result<f64> {
    check_shapes(geometry, state)?;
    let slacks = relax_slacks(instance, geometry, &state.a);
    if slacks.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Domain("constraint slack is not positive".into()));
    }
    let mut barrier: f64 = slacks.iter().map(|s| s.ln()).sum();
    for ak in &state.a {
        barrier += linalg::hpd_logdet(ak).ok_or_else(|| Error::Domain("A_k is not positive definite".into()))?;
    }
    Ok(relax_rate(instance, geometry, &state.a) + barrier / state.t)
}

/// Update directions `D_k`: diagonal entries are `∂f_t/∂[A_k]_mm`, off-diagonal
/// entries `∂f_t/∂Re[A_k]_mn + j ∂f_t/∂Im[A_k]_mn`.
pub fn relax_gradient(instance: &Instance, geometry: &ZfGeometry, state: &RelaxState) -> Result<Vec<CMat>> {
    check_shapes(geometry, state)?;
    let slacks = relax_slacks(instance, geometry, &state.a);
    if slacks.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Domain("constraint slack is not positive".into()));
    }
    let n = geometry.reduced_dim();
    let t = state.t;
    let mut out = Vec::with_capacity(state.a.len());
    for (k, ak) in state.a.iter().enumerate() {
        let inv = linalg::hpd_inverse(ak).ok_or_else(|| Error::Domain("A_k is not positive definite".into()))?;
        let mut b = inv;
        for (red, s) in geometry.reduced.iter().zip(&slacks) {
            b -= &red[k] * c(1.0 / s, 0.0);
        }
        let mut d = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let scale = if i == j { 1.0 } else { 2.0 };
                d[(i, j)] = b[(i, j)] * c(scale / t, 0.0);
            }
        }
        for i in 0..n {
            d[(i, i)].im = 0.0;
        }
        let w = instance.weights()[k];
        let dk = geometry.d[k];
        d[(0, 0)].re += w * dk / (1.0 + dk * ak[(0, 0)].re);
        out.push(d);
    }
    Ok(out)
}

/// `Σ_k Σ_{i≥j} |[D_k]_ij|²`.
fn lower_norm_sqr(d: &[CMat]) -> f64 {
    d.iter()
        .map(|dk| {
            let n = dk.nrows();
            (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).map(|(i, j)| dk[(i, j)].norm_sqr()).sum::<f64>()
        })
        .sum()
}

/// `A_k(0) = c·I` with `c = ½ min_ℓ γ_ℓ / Σ_k tr Φ̃_{ℓ,k}`.
pub fn initial_state(instance: &Instance, geometry: &ZfGeometry, t0: f64) -> RelaxState {
    let n = geometry.reduced_dim();
    let scale = instance
        .constraints()
        .iter()
        .zip(&geometry.reduced)
        .filter_map(|(cst, red)| {
            let tr: f64 = red.iter().map(|p| p.trace().re).sum();
            (tr > 0.0).then(|| cst.gamma() / tr)
        })
        .fold(f64::INFINITY, f64::min);
    let c0 = 0.5 * if scale.is_finite() { scale } else { 1.0 };
    RelaxState { a: vec![CMat::identity(n, n) * c(c0, 0.0); geometry.users()], t: t0 }
}

/// Number of barrier terms `m` in the gap bound `m/t`.
fn barrier_terms(instance: &Instance, geometry: &ZfGeometry) -> f64 {
    (instance.constraints().len() + geometry.users() * geometry.reduced_dim()) as f64
}

fn usage(instance: &Instance, geometry: &ZfGeometry, a: &[CMat]) -> Vec<f64> {
    let slacks = relax_slacks(instance, geometry, a);
    instance.constraints().iter().zip(slacks).map(|(cst, s)| cst.gamma() - s).collect()
}

/// Runs at most `budget` gradient iterations from the initial state. The
/// solution's `converged` flag tells whether the outer gap criterion was met.
pub fn gradient_iterate(
    instance: &Instance,
    geometry: &ZfGeometry,
    opts: &GradientOptions,
    budget: usize,
) -> Result<(RelaxSolution, ConvergenceTrace)> {
    let mut state = initial_state(instance, geometry, opts.t0);
    let m = barrier_terms(instance, geometry);
    let mut trace = ConvergenceTrace::new(true);
    let mut f = relax_objective(instance, geometry, &state)?;
    trace.push(TraceRow {
        iteration: 0,
        t: Some(state.t),
        objective: relax_rate(instance, geometry, &state.a),
        residual_norm: f64::NAN,
        usage: usage(instance, geometry, &state.a),
        outer_boundary: false,
    });
    let mut iterations = 0;
    let mut converged = false;
    'outer: loop {
        loop {
            if iterations >= budget {
                break 'outer;
            }
            iterations += 1;
            let d = relax_gradient(instance, geometry, &state)?;
            let norm2 = lower_norm_sqr(&d);
            let mut s = 1.0;
            let (next, f_next) = loop {
                let cand = RelaxState {
                    a: state.a.iter().zip(&d).map(|(a, dk)| linalg::hermitized(&(a + dk * c(s, 0.0)))).collect(),
                    t: state.t,
                };
                match relax_objective(instance, geometry, &cand) {
                    Ok(fc) if fc >= f + opts.alpha * s * norm2 => break (cand, fc),
                    _ => s *= opts.beta,
                }
                if s < 1e-300 {
                    return Err(Error::LineSearchStall { solver: "zf_gradient" });
                }
            };
            state = next;
            f = f_next;
            let stop = s * norm2.sqrt() < opts.delta;
            trace.push(TraceRow {
                iteration: iterations,
                t: Some(state.t),
                objective: relax_rate(instance, geometry, &state.a),
                residual_norm: norm2.sqrt(),
                usage: usage(instance, geometry, &state.a),
                outer_boundary: stop,
            });
            if stop {
                break;
            }
        }
        if m / state.t <= opts.gap {
            converged = true;
            break;
        }
        state.t *= opts.nu;
        f = relax_objective(instance, geometry, &state)?;
    }
    let objective = relax_rate(instance, geometry, &state.a);
    Ok((RelaxSolution { a: state.a, t: state.t, objective, iterations, converged }, trace))
}

/// Full barrier run; the relaxation point is mapped to ZF steering vectors by
/// per-user rank-1 extraction.
pub fn gradient_solve(instance: &Instance, opts: &GradientOptions) -> Result<(RelaxSolution, Precoder, ConvergenceTrace)> {
    let geometry = zf_geometry(instance)?;
    let (sol, trace) = gradient_iterate(instance, &geometry, opts, opts.max_iterations)?;
    if !sol.converged {
        return Err(Error::MaxIterations { solver: "zf_gradient", iterations: sol.iterations });
    }
    let precoder = extract_from_relaxation(instance, &geometry, &sol.a)?;
    Ok((sol, precoder, trace))
}
