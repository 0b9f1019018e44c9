//! Zero-forcing geometry: normalized pseudo-inverse columns, the channel
//! nullspace, per-user reduced bases `U_k = [g_k | U⊥]`, and the rank-1
//! extraction that maps a relaxation point to ZF steering vectors.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec};
use crate::model::{Instance, Precoder};
use crate::socp::{socp_max_linear, ExtractProblem};

/// Relative singular-value threshold below which `H` is rank deficient.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ZfGeometry {
    /// Unit-norm pseudo-inverse columns, phased so that `g_k^H h_k > 0`.
    pub g: CMat,
    /// Orthonormal basis of the orthogonal complement of the channel span.
    pub u_perp: CMat,
    /// `d_k = |g_k^H h_k|²`.
    pub d: Vec<f64>,
    /// `U_k = [g_k | U⊥]`.
    pub bases: Vec<CMat>,
    /// `reduced[ℓ][k] = U_k^H Φ_ℓ U_k`.
    pub reduced: Vec<Vec<CMat>>,
}

impl ZfGeometry {
    pub fn users(&self) -> usize {
        self.g.ncols()
    }

    /// `M − K + 1`.
    pub fn reduced_dim(&self) -> usize {
        self.u_perp.ncols() + 1
    }

    /// `U_k a`.
    pub fn lift(&self, k: usize, a: &CVec) -> CVec {
        &self.bases[k] * a
    }

    /// `A_k = U_k^H t t^H U_k` for a steering vector of user `k`.
    pub fn reduce(&self, k: usize, t: &CVec) -> CMat {
        linalg::outer(&(self.bases[k].adjoint() * t))
    }
}

pub fn zf_geometry(instance: &Instance) -> Result<ZfGeometry> {
    let h = instance.channels();
    let (m, k) = h.shape();
    if k > m {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let svd = h.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin < RANK_TOL * smax {
        return Err(Error::RankDeficient { ratio: if smax > 0.0 { smin / smax } else { 0.0 } });
    }
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    // H⁺ = H (H^H H)^{-1} = U S^{-1} V^H
    let mut us = u.clone();
    for (j, mut col) in us.column_iter_mut().enumerate() {
        col.unscale_mut(s[j]);
    }
    let pinv = us * &v_t;
    let mut g = pinv.clone();
    let mut d = Vec::with_capacity(k);
    for (j, mut col) in g.column_iter_mut().enumerate() {
        let n = col.norm();
        col.unscale_mut(n);
        let inner = col.dotc(&h.column(j));
        let phase = inner / c(inner.norm(), 0.0);
        col *= phase;
        d.push(col.dotc(&h.column(j)).norm_sqr());
    }
    let u_perp = linalg::orthonormal_complement(&u);
    let bases: Vec<CMat> = (0..k)
        .map(|j| {
            let mut b = CMat::zeros(m, u_perp.ncols() + 1);
            b.column_mut(0).copy_from(&g.column(j));
            b.columns_mut(1, u_perp.ncols()).copy_from(&u_perp);
            b
        })
        .collect();
    let reduced = instance
        .constraints()
        .iter()
        .map(|cst| bases.iter().map(|b| linalg::hermitized(&(b.adjoint() * cst.phi() * b))).collect())
        .collect();
    Ok(ZfGeometry { g, u_perp, d, bases, reduced })
}

/// `budgets[k][ℓ] = tr(A_k Φ̃_{ℓ,k})` of a relaxation point.
pub fn relaxation_budgets(geometry: &ZfGeometry, a: &[CMat]) -> Vec<Vec<f64>> {
    (0..geometry.users())
        .map(|k| geometry.reduced.iter().map(|red| linalg::trace_product(&a[k], &red[k]).re.max(0.0)).collect())
        .collect()
}

/// Per-user extraction: maximize `Re(h_k^H t_k)` over ZF vectors `t_k = U_k a`
/// with `t_k^H Φ_ℓ t_k ≤ budgets[k][ℓ]`.
pub fn rank1_extract(instance: &Instance, geometry: &ZfGeometry, budgets: &[Vec<f64>]) -> Result<Precoder> {
    let k_users = geometry.users();
    let n_cons = instance.constraints().len();
    if budgets.len() != k_users || budgets.iter().any(|b| b.len() != n_cons) {
        return Err(Error::DimensionMismatch("budgets must be K × (L+1)".into()));
    }
    let dim = geometry.reduced_dim();
    let mut cols = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let u = geometry.bases[k].adjoint() * instance.channel(k);
        let caps: Vec<(CMat, f64)> = (0..n_cons).map(|l| (geometry.reduced[l][k].clone(), budgets[k][l])).collect();
        let sol = socp_max_linear(&ExtractProblem { u, equalities: CMat::zeros(0, dim), caps }).map_err(|e| match e {
            Error::SocpUnbounded => Error::SocpFailed(format!("extraction for user {k} is unbounded")),
            other => other,
        })?;
        cols.push(geometry.lift(k, &sol.a));
    }
    Ok(Precoder::from_columns(&cols))
}

/// Extraction from a relaxation point `{A_k}`: the SOCP solution per user, or the
/// explicit candidate `A_k e₁ / √[A_k]₁₁` if that is better.
pub fn extract_from_relaxation(instance: &Instance, geometry: &ZfGeometry, a: &[CMat]) -> Result<Precoder> {
    let budgets = relaxation_budgets(geometry, a);
    let socp = rank1_extract(instance, geometry, &budgets)?;
    let mut cols = Vec::with_capacity(a.len());
    for (k, ak) in a.iter().enumerate() {
        let t = socp.column(k);
        let a11 = ak[(0, 0)].re;
        let h = instance.channel(k);
        let mut best = t.clone();
        if a11 > 0.0 {
            let cand = geometry.lift(k, &(ak.column(0).into_owned() * c(1.0 / a11.sqrt(), 0.0)));
            let fits = instance
                .constraints()
                .iter()
                .zip(&budgets[k])
                .all(|(cst, &b)| cst.quad(&cand) <= b * (1.0 + 1e-12) + 1e-15);
            if fits && h.dotc(&cand).norm() > h.dotc(&t).norm() {
                best = cand;
            }
        }
        cols.push(best);
    }
    Ok(Precoder::from_columns(&cols))
}
