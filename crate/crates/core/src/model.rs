//! Problem statement, precoder representation, and rate/constraint evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec};

/// Relative tolerance of the PSD check on constraint matrices.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    SumPower,
    PerAntenna,
    InterferenceDirection,
    General,
}

/// One linear constraint `tr(Σx Φ) ≤ γ`.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    phi: CMat,
    gamma: f64,
    kind: ConstraintKind,
    direction: Option<CVec>,
}

impl LinearConstraint {
    pub fn sum_power(m: usize, budget: f64) -> Result<Self> {
        Self::checked(CMat::identity(m, m), budget, ConstraintKind::SumPower, None)
    }

    /// Power budget on a group of antennas (a single antenna is a one-element group).
    pub fn per_antenna(m: usize, antennas: &[usize], budget: f64) -> Result<Self> {
        let mut phi = CMat::zeros(m, m);
        for &a in antennas {
            if a >= m {
                return Err(Error::InvalidInstance(format!("antenna index {a} out of range")));
            }
            phi[(a, a)] = c(1.0, 0.0);
        }
        Self::checked(phi, budget, ConstraintKind::PerAntenna, None)
    }

    /// Forbidden interference direction: `c^H Σx c ≤ γ`.
    pub fn interference(direction: CVec, budget: f64) -> Result<Self> {
        let phi = linalg::outer(&direction);
        Self::checked(phi, budget, ConstraintKind::InterferenceDirection, Some(direction))
    }

    pub fn general(phi: CMat, budget: f64) -> Result<Self> {
        Self::checked(phi, budget, ConstraintKind::General, None)
    }

    fn checked(phi: CMat, gamma: f64, kind: ConstraintKind, direction: Option<CVec>) -> Result<Self> {
        if !phi.is_square() {
            return Err(Error::DimensionMismatch("constraint matrix must be square".into()));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidInstance(format!("constraint budget must be positive, got {gamma}")));
        }
        if !linalg::is_hermitian(&phi, 1e-12) {
            return Err(Error::InvalidInstance("constraint matrix is not Hermitian".into()));
        }
        if !linalg::is_psd(&phi, PSD_TOL) {
            return Err(Error::InvalidInstance("constraint matrix is not positive semidefinite".into()));
        }
        Ok(Self { phi: linalg::hermitized(&phi), gamma, kind, direction })
    }

    pub fn phi(&self) -> &CMat {
        &self.phi
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn direction(&self) -> Option<&CVec> {
        self.direction.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::checked(self.phi.clone(), gamma, self.kind, self.direction.clone())
    }

    /// `x^H Φ y`, using the rank-1 factor when available.
    pub fn bilinear(&self, x: &CVec, y: &CVec) -> linalg::C64 {
        match &self.direction {
            Some(d) => x.dotc(d) * d.dotc(y),
            None => x.dotc(&(&self.phi * y)),
        }
    }

    /// `x^H Φ x`.
    pub fn quad(&self, x: &CVec) -> f64 {
        match &self.direction {
            Some(d) => d.dotc(x).norm_sqr(),
            None => linalg::quad_form(&self.phi, x),
        }
    }
}

/// A WSRM problem: channels (columns of `h`), rate weights, and constraints with
/// the sum-power constraint at index 0.
#[derive(Debug, Clone)]
pub struct Instance {
    h: CMat,
    weights: Vec<f64>,
    order: Vec<usize>,
    constraints: Vec<LinearConstraint>,
}

impl Instance {
    pub fn new(h: CMat, weights: Vec<f64>, constraints: Vec<LinearConstraint>) -> Result<Self> {
        let (m, k) = h.shape();
        if m == 0 || k == 0 {
            return Err(Error::DimensionMismatch("channel matrix is empty".into()));
        }
        if weights.len() != k {
            return Err(Error::DimensionMismatch(format!("{} weights for {k} users", weights.len())));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidInstance(format!(
                "rate weights must be positive (zero-weight users must be removed), got {w}"
            )));
        }
        match constraints.first() {
            Some(first) if first.kind == ConstraintKind::SumPower => {}
            _ => {
                return Err(Error::InvalidInstance(
                    "constraint 0 must be the sum-power constraint".into(),
                ))
            }
        }
        if constraints.iter().any(|cst| cst.dim() != m) {
            return Err(Error::DimensionMismatch("constraint matrix size differs from antenna count".into()));
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInstance("channel matrix has non-finite entries".into()));
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
        Ok(Self { h, weights, order, constraints })
    }

    /// Sum-power budget `p` plus any further constraints.
    pub fn with_sum_power(h: CMat, weights: Vec<f64>, p: f64, others: Vec<LinearConstraint>) -> Result<Self> {
        let mut constraints = vec![LinearConstraint::sum_power(h.nrows(), p)?];
        constraints.extend(others);
        Self::new(h, weights, constraints)
    }

    /// Seeded instance with CN(0,1) channels, unit weights, sum power `p` and `l`
    /// random forbidden directions of budget `gamma`.
    pub fn random(seed: u64, m: usize, k: usize, l: usize, p: f64, gamma: f64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<CVec> = (0..k).map(|_| linalg::complex_gaussian(&mut rng, m, 1.0)).collect();
        let others = (0..l)
            .map(|_| LinearConstraint::interference(linalg::complex_gaussian(&mut rng, m, 1.0), gamma))
            .collect::<Result<Vec<_>>>()?;
        Self::with_sum_power(CMat::from_columns(&cols), vec![1.0; k], p, others)
    }

    pub fn antennas(&self) -> usize {
        self.h.nrows()
    }

    pub fn users(&self) -> usize {
        self.h.ncols()
    }

    pub fn channels(&self) -> &CMat {
        &self.h
    }

    pub fn channel(&self, k: usize) -> CVec {
        self.h.column(k).into_owned()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// User indices sorted by nonincreasing weight (ties by index).
    pub fn weight_order(&self) -> &[usize] {
        &self.order
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn sum_power(&self) -> f64 {
        self.constraints[0].gamma
    }

    pub fn budgets(&self) -> Vec<f64> {
        self.constraints.iter().map(|cst| cst.gamma).collect()
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.h.clone(), weights, self.constraints.clone())
    }

    pub fn with_constraints(&self, constraints: Vec<LinearConstraint>) -> Result<Self> {
        Self::new(self.h.clone(), self.weights.clone(), constraints)
    }

    /// Instance restricted to the given users (in the given order).
    pub fn subset(&self, users: &[usize]) -> Result<Self> {
        let cols: Vec<CVec> = users.iter().map(|&k| self.channel(k)).collect();
        if cols.is_empty() {
            return Err(Error::InvalidInstance("empty user subset".into()));
        }
        let w = users.iter().map(|&k| self.weights[k]).collect();
        Self::new(CMat::from_columns(&cols), w, self.constraints.clone())
    }
}

/// Unnormalized steering columns `t_k = √q_k v_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    t: CMat,
}

impl Precoder {
    pub fn new(t: CMat) -> Self {
        Self { t }
    }

    pub fn from_columns(cols: &[CVec]) -> Self {
        Self { t: CMat::from_columns(cols) }
    }

    /// From unit directions and powers.
    pub fn from_directions(v: &CMat, q: &[f64]) -> Self {
        let mut t = v.clone();
        for (k, qk) in q.iter().enumerate() {
            let scale = qk.max(0.0).sqrt();
            t.column_mut(k).scale_mut(scale);
        }
        Self { t }
    }

    pub fn matrix(&self) -> &CMat {
        &self.t
    }

    pub fn users(&self) -> usize {
        self.t.ncols()
    }

    pub fn column(&self, k: usize) -> CVec {
        self.t.column(k).into_owned()
    }

    pub fn powers(&self) -> Vec<f64> {
        self.t.column_iter().map(|col| col.norm_squared()).collect()
    }

    /// Unit-norm steering directions; zero columns stay zero.
    pub fn directions(&self) -> CMat {
        let mut v = self.t.clone();
        for mut col in v.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col.unscale_mut(n);
            }
        }
        v
    }

    pub fn covariance(&self) -> CMat {
        &self.t * self.t.adjoint()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { t: &self.t * c(factor, 0.0) }
    }

    /// Largest factor `≤ 1` keeping every constraint satisfied; the precoder scaled by it.
    pub fn restored(&self, instance: &Instance) -> Self {
        let usage = constraint_usage(instance, self);
        let factor = instance
            .constraints()
            .iter()
            .zip(&usage)
            .filter(|(_, &u)| u > 0.0)
            .map(|(cst, &u)| (cst.gamma() / u).sqrt())
            .fold(1.0, f64::min);
        if factor < 1.0 {
            self.scaled(factor * (1.0 - 1e-12))
        } else {
            self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rates: Vec<f64>,
    pub weighted_sum: f64,
    pub usage: Vec<f64>,
    pub slack: Vec<f64>,
    /// Worst normalized leakage `|h_j^H t_k| / (‖h_j‖‖t_k‖)`, `j ≠ k`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zf_residual: Option<f64>,
}

impl RateReport {
    fn build(instance: &Instance, rates: Vec<f64>, usage: Vec<f64>, zf_residual: Option<f64>) -> Self {
        let weighted_sum = rates.iter().zip(instance.weights()).map(|(r, w)| r * w).sum();
        let slack = instance.constraints().iter().zip(&usage).map(|(cst, u)| cst.gamma() - u).collect();
        Self { rates, weighted_sum, usage, slack, zf_residual }
    }

    pub fn max_violation(&self) -> f64 {
        self.slack.iter().fold(0.0, |acc, &s| acc.max(-s))
    }
}

fn check_dims(instance: &Instance, precoder: &Precoder) -> Result<()> {
    if precoder.matrix().shape() != instance.channels().shape() {
        return Err(Error::DimensionMismatch(format!(
            "precoder is {:?}, channels are {:?}",
            precoder.matrix().shape(),
            instance.channels().shape()
        )));
    }
    Ok(())
}

/// DPC rates for the successive encoding order `order` (first entry encoded first).
/// A user sees interference only from users encoded after it.
pub fn dpc_rates(instance: &Instance, precoder: &Precoder, order: &[usize]) -> Result<RateReport> {
    check_dims(instance, precoder)?;
    let k = instance.users();
    let mut seen = vec![false; k];
    if order.len() != k || order.iter().any(|&u| u >= k || std::mem::replace(&mut seen[u], true)) {
        return Err(Error::DimensionMismatch("encoding order is not a permutation of the users".into()));
    }
    let t = precoder.matrix();
    let mut rates = vec![0.0; k];
    for (pos, &user) in order.iter().enumerate() {
        let h = instance.channels().column(user);
        let signal = h.dotc(&t.column(user)).norm_sqr();
        let interference: f64 = order[pos + 1..].iter().map(|&j| h.dotc(&t.column(j)).norm_sqr()).sum();
        rates[user] = (1.0 + signal / (1.0 + interference)).ln();
    }
    let usage = constraint_usage(instance, precoder);
    Ok(RateReport::build(instance, rates, usage, None))
}

/// Zero-forcing rates `log(1 + |h_k^H t_k|²)` plus the worst ZF leakage.
pub fn zf_rates(instance: &Instance, precoder: &Precoder) -> RateReport {
    let h = instance.channels();
    let t = precoder.matrix();
    let k = instance.users().min(precoder.users());
    let rates = (0..k).map(|u| (1.0 + h.column(u).dotc(&t.column(u)).norm_sqr()).ln()).collect();
    let mut residual: f64 = 0.0;
    for u in 0..k {
        let tn = t.column(u).norm();
        if tn == 0.0 {
            continue;
        }
        for j in (0..k).filter(|&j| j != u) {
            let hn = h.column(j).norm();
            residual = residual.max(h.column(j).dotc(&t.column(u)).norm() / (hn * tn));
        }
    }
    let usage = constraint_usage(instance, precoder);
    RateReport::build(instance, rates, usage, Some(residual))
}

/// `tr(T T^H Φℓ)` for every constraint, without forming `Σx` for rank-1 constraints.
pub fn constraint_usage(instance: &Instance, precoder: &Precoder) -> Vec<f64> {
    let t = precoder.matrix();
    instance
        .constraints()
        .iter()
        .map(|cst| match cst.kind() {
            ConstraintKind::SumPower => t.norm_squared(),
            _ => t.column_iter().map(|col| cst.quad(&col.into_owned())).sum(),
        })
        .collect()
}

/// Dense-path usage `Re tr(Σx Φℓ)`, kept for cross-checking the factored path.
pub fn constraint_usage_dense(instance: &Instance, precoder: &Precoder) -> Vec<f64> {
    let sigma = precoder.covariance();
    instance.constraints().iter().map(|cst| linalg::trace_product(&sigma, cst.phi()).re).collect()
}
