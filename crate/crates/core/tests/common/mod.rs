#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsrm::dpc_newton::NewtonPoint;
use wsrm::linalg::{self, CMat, CVec};
use wsrm::{Instance, LinearConstraint};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `M × K` unit-variance Rayleigh channels, `L` rank-1 constraints with budget
/// `gamma`, sum power `p`.
pub fn random_instance(seed: u64, m: usize, k: usize, l: usize, p: f64, gamma: f64, equal_weights: bool) -> Instance {
    let mut rng = rng(seed);
    let cols: Vec<CVec> = (0..k).map(|_| linalg::complex_gaussian(&mut rng, m, 1.0)).collect();
    let cons = (0..l)
        .map(|_| LinearConstraint::interference(linalg::complex_gaussian(&mut rng, m, 1.0), gamma).unwrap())
        .collect();
    let w = if equal_weights { vec![1.0; k] } else { (0..k).map(|_| 0.5 + rng.random::<f64>()).collect() };
    Instance::with_sum_power(CMat::from_columns(&cols), w, p, cons).unwrap()
}

pub fn random_point(seed: u64, instance: &Instance) -> NewtonPoint {
    let mut rng = rng(seed);
    NewtonPoint {
        p: (0..instance.users()).map(|_| 0.2 + 3.0 * rng.random::<f64>()).collect(),
        lambda: (0..instance.constraints().len() - 1).map(|_| 0.1 + rng.random::<f64>()).collect(),
        mu: 0.1 + rng.random::<f64>(),
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Central difference of `f` along coordinate `i` with a scaled step.
pub fn central_diff(x: &[f64], i: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let h = 1e-5 * x[i].abs().max(1.0);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}
