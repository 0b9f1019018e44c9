//! Dual-MAC quantities shared by the DPC solvers, in weight-sorted user order.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec};
use crate::model::{Instance, Precoder};

/// Users re-indexed so that `W_1 ≥ … ≥ W_K`, with `Δ_k = W_k − W_{k+1}`.
#[derive(Debug, Clone)]
pub(crate) struct SortedMac {
    pub h: Vec<CVec>,
    pub w: Vec<f64>,
    pub delta: Vec<f64>,
    /// `order[i]` is the original index of sorted user `i`.
    pub order: Vec<usize>,
    pub m: usize,
}

/// Real part of a quantity that is real in exact arithmetic.
pub(crate) fn real_part(z: linalg::C64, scale: f64) -> f64 {
    debug_assert!(z.im.abs() <= 1e-10 * scale.max(1.0), "imaginary residue {z}");
    z.re
}

impl SortedMac {
    pub fn new(instance: &Instance) -> Self {
        let order = instance.weight_order().to_vec();
        let h = order.iter().map(|&k| instance.channel(k)).collect();
        let w: Vec<f64> = order.iter().map(|&k| instance.weights()[k]).collect();
        let delta = (0..w.len()).map(|k| w[k] - w.get(k + 1).copied().unwrap_or(0.0)).collect();
        Self { h, w, delta, order, m: instance.antennas() }
    }

    pub fn users(&self) -> usize {
        self.h.len()
    }

    pub fn to_sorted(&self, v: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&k| v[k]).collect()
    }

    pub fn to_original(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (i, &k) in self.order.iter().enumerate() {
            out[k] = v[i];
        }
        out
    }

    /// `Σ_ℓ λ_ℓ Φ_ℓ` over all constraints (index 0 is the sum power).
    pub fn noise(&self, instance: &Instance, lambda: &[f64]) -> CMat {
        let mut s = CMat::zeros(self.m, self.m);
        for (cst, &l) in instance.constraints().iter().zip(lambda) {
            if l != 0.0 {
                s += cst.phi() * c(l, 0.0);
            }
        }
        s
    }

    /// `S_k = Σz + Σ_{j≤k} p_j h_j h_j^H` for `k = 0..K`.
    pub fn covariances(&self, noise: &CMat, p: &[f64]) -> Vec<CMat> {
        let mut out = Vec::with_capacity(p.len() + 1);
        let mut s = noise.clone();
        out.push(s.clone());
        for (h, &pk) in self.h.iter().zip(p) {
            s += linalg::outer(h) * c(pk, 0.0);
            out.push(s.clone());
        }
        out
    }

    /// `Ψ_k = S_k^{-1}` for `k = 0..K`.
    pub fn psis(&self, noise: &CMat, p: &[f64]) -> Result<Vec<CMat>> {
        self.covariances(noise, p).iter().map(|s| linalg::hpd_inverse(s).ok_or(Error::SingularNoise)).collect()
    }

    /// `Σ_k Δ_k log|S_k| − W_1 log|S_0|`, the MAC weighted sum rate.
    pub fn weighted_rate(&self, noise: &CMat, p: &[f64]) -> Result<f64> {
        let covs = self.covariances(noise, p);
        let mut val = -self.w[0] * linalg::hpd_logdet(&covs[0]).ok_or(Error::SingularNoise)?;
        for (k, s) in covs.iter().enumerate().skip(1) {
            if self.delta[k - 1] != 0.0 {
                val += self.delta[k - 1] * linalg::hpd_logdet(s).ok_or(Error::SingularNoise)?;
            }
        }
        Ok(val)
    }

    /// Per-user MAC rates (sorted order) under decoding order K, …, 1.
    pub fn mac_rates(&self, psis: &[CMat], p: &[f64]) -> Vec<f64> {
        (0..self.users())
            .map(|k| {
                let sinr = p[k] * real_part(self.h[k].dotc(&(&psis[k] * &self.h[k])), p[k]);
                (1.0 + sinr).ln()
            })
            .collect()
    }

    /// `∂/∂p_i = Σ_{k≥i} Δ_k h_i^H Ψ_k h_i` (sorted order, `psis[k]` is `Ψ_k`).
    pub fn rate_gradient(&self, psis: &[CMat]) -> Vec<f64> {
        let k_users = self.users();
        (0..k_users)
            .map(|i| {
                (i..k_users)
                    .filter(|&k| self.delta[k] != 0.0)
                    .map(|k| self.delta[k] * real_part(self.h[i].dotc(&(&psis[k + 1] * &self.h[i])), 1.0))
                    .sum()
            })
            .collect()
    }

    /// MAC-to-BC map: MMSE directions from the dual MAC, BC powers from the
    /// triangular SINR-matching system with encoding order 1, …, K (sorted).
    /// Returns the precoder in original user order.
    pub fn to_bc(&self, psis: &[CMat], p: &[f64]) -> Result<Precoder> {
        let k_users = self.users();
        let mut dirs: Vec<CVec> = Vec::with_capacity(k_users);
        let mut sinr = vec![0.0; k_users];
        for k in 0..k_users {
            let w = &psis[k] * &self.h[k];
            let n = w.norm();
            if n == 0.0 || !n.is_finite() {
                return Err(Error::SingularSinr { user: self.order[k] });
            }
            sinr[k] = p[k].max(0.0) * real_part(self.h[k].dotc(&w), 1.0);
            dirs.push(w.unscale(n));
        }
        let mut q = vec![0.0; k_users];
        for k in (0..k_users).rev() {
            if sinr[k] == 0.0 {
                continue;
            }
            let gain = self.h[k].dotc(&dirs[k]).norm_sqr();
            if gain <= 1e-300 {
                return Err(Error::SingularSinr { user: self.order[k] });
            }
            let interf: f64 = (k + 1..k_users).map(|j| q[j] * self.h[k].dotc(&dirs[j]).norm_sqr()).sum();
            q[k] = sinr[k] * (1.0 + interf) / gain;
        }
        let mut cols = vec![CVec::zeros(self.m); k_users];
        for k in 0..k_users {
            cols[self.order[k]] = &dirs[k] * c(q[k].sqrt(), 0.0);
        }
        Ok(Precoder::from_columns(&cols))
    }

    /// Original user indices in BC encoding order.
    pub fn encoding_order(&self) -> Vec<usize> {
        self.order.clone()
    }
}
