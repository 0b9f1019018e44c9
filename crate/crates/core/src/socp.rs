//! Small dense second-order cone solvers for the two shapes used by the ZF
//! solvers: linear-objective maximization under quadratic caps, and the
//! min-max normalized-usage problem over nullspace coefficients.
//!
//! Both are written as `min cᵀx` subject to convex quadratic constraints
//! `xᵀQx + 2bᵀx + r ≤ 0` in a real embedding and solved by a log-barrier
//! path-following Newton method. Every solve returns a Lagrangian dual bound
//! built from the central-path multipliers `z_ℓ = 1/(t·slack_ℓ)`.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, RMat, RVec};

/// `maximize Re(u^H a)` s.t. `E a = 0`, `a^H Ψ_ℓ a ≤ η_ℓ`.
#[derive(Debug, Clone)]
pub struct ExtractProblem {
    pub u: CVec,
    /// Rows are equality constraints; may have zero rows.
    pub equalities: CMat,
    pub caps: Vec<(CMat, f64)>,
}

#[derive(Debug, Clone)]
pub struct ExtractSolution {
    pub a: CVec,
    /// `Re(u^H a)`.
    pub value: f64,
    /// Certified upper bound on the optimal value.
    pub bound: f64,
}

/// `minimize max_ℓ √(tr(TT^HΦ_ℓ)/γ_ℓ)` over `B` with `T = F + N B`.
#[derive(Debug, Clone)]
pub struct MinMaxProblem {
    pub f: CMat,
    pub n: CMat,
    pub norms: Vec<(CMat, f64)>,
}

#[derive(Debug, Clone)]
pub struct MinMaxSolution {
    pub b: CMat,
    pub u: f64,
    /// Certified lower bound on the optimal `u`.
    pub bound: f64,
}

const PATH_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
struct Quad {
    q: RMat,
    b: RVec,
    r: f64,
}

impl Quad {
    fn value(&self, x: &RVec) -> f64 {
        x.dot(&(&self.q * x)) + 2.0 * self.b.dot(x) + self.r
    }

    fn grad(&self, x: &RVec) -> RVec {
        (&self.q * x + &self.b) * 2.0
    }
}

/// Orthonormal basis (columns) of the eigenvectors of symmetric `m` whose eigenvalue
/// exceeds `rel` times the largest.
fn range_basis(m: &RMat, rel: f64) -> RMat {
    let n = m.nrows();
    if n == 0 {
        return RMat::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<RVec> = (0..n)
        .filter(|&i| top > 0.0 && eig.eigenvalues[i] > rel * top)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        RMat::zeros(n, 0)
    } else {
        RMat::from_columns(&cols)
    }
}

/// `min_x xᵀAx + linᵀx` for symmetric PSD `A`, or `None` when unbounded below.
fn quad_min(a: &RMat, lin: &RVec) -> Option<f64> {
    let n = a.nrows();
    if n == 0 {
        return Some(0.0);
    }
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let scale = lin.norm().max(1e-300);
    let mut val = 0.0;
    for i in 0..n {
        let v = eig.eigenvectors.column(i);
        let g = v.dot(lin);
        let ev = eig.eigenvalues[i];
        if ev > 1e-12 * top && top > 0.0 {
            val -= g * g / (4.0 * ev);
        } else if g.abs() > 1e-9 * scale {
            return None;
        }
    }
    Some(val)
}

struct BarrierResult {
    x: RVec,
    /// Central-path multipliers.
    z: Vec<f64>,
}

/// Path-following barrier method from a strictly feasible `x0`.
fn barrier_solve(c: &RVec, cons: &[Quad], x0: RVec) -> Result<BarrierResult> {
    let n = x0.len();
    let mut metric = RMat::zeros(n, n);
    for q in cons {
        metric += &q.q + &q.b * q.b.transpose();
    }
    let v = range_basis(&metric, 1e-13);
    let c_off = c - &v * (v.transpose() * c);
    if c_off.norm() > 1e-9 * c.norm().max(1e-300) {
        return Err(Error::SocpUnbounded);
    }
    // reduced problem in w with x = x0 + V w
    let red: Vec<Quad> = cons
        .iter()
        .map(|q| Quad {
            q: v.transpose() * &q.q * &v,
            b: v.transpose() * (&q.q * &x0 + &q.b),
            r: q.value(&x0),
        })
        .collect();
    if red.iter().any(|q| !(q.r < 0.0)) {
        return Err(Error::SocpFailed("starting point is not strictly feasible".into()));
    }
    let cr = v.transpose() * c;
    let m = cons.len() as f64;
    let dim = v.ncols();
    let mut w = RVec::zeros(dim);
    let lift = |w: &RVec| &x0 + &v * w;
    if dim == 0 || m == 0.0 {
        let z = vec![0.0; cons.len()];
        return Ok(BarrierResult { x: lift(&w), z });
    }
    let scale = cr.norm().max(1e-300);
    let mut t = m / scale;
    let mut total = 0;
    loop {
        // centering
        let mut centering = 0;
        loop {
            total += 1;
            centering += 1;
            if total > 2000 {
                return Err(Error::SocpFailed("barrier iterations exhausted".into()));
            }
            let slacks: Vec<f64> = red.iter().map(|q| -q.value(&w)).collect();
            let mut grad = &cr * t;
            let mut hess = RMat::zeros(dim, dim);
            for (q, s) in red.iter().zip(&slacks) {
                let g = q.grad(&w);
                grad += &g / *s;
                hess += &q.q * (2.0 / s) + &g * g.transpose() / (s * s);
            }
            let d = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => hess.lu().solve(&(-&grad)).ok_or_else(|| Error::SocpFailed("singular barrier Hessian".into()))?,
            };
            let dec = -grad.dot(&d);
            if dec / 2.0 <= 1e-9 || centering > 60 {
                break;
            }
            let phi = |w: &RVec| -> Option<f64> {
                let mut val = t * cr.dot(w);
                for q in &red {
                    let s = -q.value(w);
                    if s <= 0.0 {
                        return None;
                    }
                    val -= s.ln();
                }
                Some(val)
            };
            let f0 = phi(&w).ok_or_else(|| Error::SocpFailed("left the interior".into()))?;
            let mut step = 1.0;
            loop {
                let cand = &w + &d * step;
                if let Some(f1) = phi(&cand) {
                    if f1 <= f0 - 0.25 * step * dec {
                        w = cand;
                        break;
                    }
                }
                step *= 0.5;
                if step < 1e-14 {
                    break;
                }
            }
            if step < 1e-14 {
                break;
            }
            if w.norm() > 1e14 {
                return Err(Error::SocpUnbounded);
            }
        }
        let obj = c.dot(&lift(&w));
        if m / t <= PATH_TOL * obj.abs().max(1e-6 * scale).max(1e-300) || t > 1e18 {
            break;
        }
        t *= 8.0;
    }
    let z = red.iter().map(|q| 1.0 / (t * -q.value(&w))).collect();
    Ok(BarrierResult { x: lift(&w), z })
}

/// Solves `maximize Re(u^H a)` s.t. `E a = 0`, `a^H Ψ_ℓ a ≤ η_ℓ`.
///
/// Caps with `η_ℓ ≤ 0` force `Ψ_ℓ a = 0` and are handled as equalities; caps
/// whose matrix vanishes on the feasible subspace are dropped.
pub fn socp_max_linear(problem: &ExtractProblem) -> Result<ExtractSolution> {
    let n = problem.u.len();
    let mut eq_rows: Vec<CVec> = problem.equalities.row_iter().map(|r| r.transpose()).collect();
    let mut caps = Vec::new();
    for (psi, eta) in &problem.caps {
        if psi.shape() != (n, n) {
            return Err(Error::DimensionMismatch("cap matrix does not match the variable".into()));
        }
        if *eta <= 0.0 {
            let (vals, vecs) = linalg::hermitian_eigen(psi);
            let top = vals.iter().cloned().fold(0.0, f64::max);
            for i in 0..n {
                if vals[i] > 1e-12 * top && top > 0.0 {
                    eq_rows.push(vecs.column(i).map(|z| z.conj()));
                }
            }
        } else {
            caps.push((psi.clone(), *eta));
        }
    }
    let e = if eq_rows.is_empty() {
        CMat::zeros(0, n)
    } else {
        CMat::from_rows(&eq_rows.iter().map(|r| r.transpose()).collect::<Vec<_>>())
    };
    let basis = linalg::null_space(&e, n, 1e-12);
    let dim = basis.ncols();
    let w_dir = basis.adjoint() * &problem.u;
    let zero = || ExtractSolution { a: CVec::zeros(n), value: 0.0, bound: 0.0 };
    if dim == 0 || w_dir.norm() <= 1e-14 * problem.u.norm().max(1e-300) {
        return Ok(zero());
    }
    let cons: Vec<Quad> = caps
        .iter()
        .filter_map(|(psi, eta)| {
            let red = basis.adjoint() * psi * &basis;
            (red.norm() > 1e-14 * psi.norm().max(1e-300)).then(|| Quad {
                q: linalg::hermitian_to_real(&linalg::hermitized(&red)),
                b: RVec::zeros(2 * dim),
                r: -eta,
            })
        })
        .collect();
    let c = -linalg::complex_to_real(&w_dir);
    let res = barrier_solve(&c, &cons, RVec::zeros(2 * dim))?;
    let a = &basis * linalg::real_to_complex(&res.x);
    let value = problem.u.dotc(&a).re;
    // Lagrangian bound: −opt ≥ min_x cᵀx + Σ z (xᵀQx − η)
    let mut q_sum = RMat::zeros(2 * dim, 2 * dim);
    let mut r_sum = 0.0;
    for (q, z) in cons.iter().zip(&res.z) {
        q_sum += &q.q * *z;
        r_sum += z * q.r;
    }
    let bound = match quad_min(&q_sum, &c) {
        Some(v) => -(v + r_sum),
        None => f64::INFINITY,
    };
    Ok(ExtractSolution { a, value, bound })
}

/// Solves `minimize u` s.t. `√(tr(TT^HΦ_ℓ)/γ_ℓ) ≤ u` with `T = F + N B`.
pub fn socp_min_max_norm(problem: &MinMaxProblem) -> Result<MinMaxSolution> {
    let (m, k) = problem.f.shape();
    let r = problem.n.ncols();
    if problem.n.nrows() != m && r > 0 {
        return Err(Error::DimensionMismatch("free basis does not match F".into()));
    }
    if problem.norms.iter().any(|(phi, g)| phi.shape() != (m, m) || !(*g > 0.0)) {
        return Err(Error::DimensionMismatch("norm matrices must be M×M with positive budgets".into()));
    }
    let usage = |b: &CMat| -> f64 {
        let t = if r > 0 { &problem.f + &problem.n * b } else { problem.f.clone() };
        problem
            .norms
            .iter()
            .map(|(phi, g)| linalg::uncounted(|| linalg::trace_product(&(&t * t.adjoint()), phi).re) / g)
            .fold(0.0, f64::max)
    };
    if r == 0 {
        let u = usage(&CMat::zeros(0, k)).sqrt();
        return Ok(MinMaxSolution { b: CMat::zeros(0, k), u, bound: u });
    }
    // per-constraint quadratic in ξ = [Re vec B; Im vec B], s appended last
    let nb = r * k;
    let nx = 2 * nb + 1;
    let mut x_quads: Vec<Quad> = Vec::new();
    for (phi, g) in &problem.norms {
        let a = linalg::hermitized(&(problem.n.adjoint() * phi * &problem.n)) / linalg::c(*g, 0.0);
        let mut big = CMat::zeros(nb, nb);
        let mut lin = CVec::zeros(nb);
        let mut r0 = 0.0;
        for col in 0..k {
            let f = problem.f.column(col).into_owned();
            big.view_mut((col * r, col * r), (r, r)).copy_from(&a);
            lin.rows_mut(col * r, r).copy_from(&(problem.n.adjoint() * (phi * &f)).unscale(*g));
            r0 += linalg::quad_form(phi, &f) / g;
        }
        x_quads.push(Quad { q: linalg::hermitian_to_real(&big), b: linalg::complex_to_real(&lin), r: r0 });
    }
    let cons: Vec<Quad> = x_quads
        .iter()
        .map(|q| {
            let mut qq = RMat::zeros(nx, nx);
            qq.view_mut((0, 0), (nx - 1, nx - 1)).copy_from(&q.q);
            let mut b = RVec::zeros(nx);
            b.rows_mut(0, nx - 1).copy_from(&q.b);
            b[nx - 1] = -0.5;
            Quad { q: qq, b, r: q.r }
        })
        .collect();
    let mut x0 = RVec::zeros(nx);
    let top = cons.iter().map(|q| q.r).fold(0.0, f64::max);
    x0[nx - 1] = 2.0 * top + 1e-12_f64.max(1e-300);
    if top == 0.0 {
        x0[nx - 1] = 1.0;
    }
    let mut c = RVec::zeros(nx);
    c[nx - 1] = 1.0;
    let res = barrier_solve(&c, &cons, x0)?;
    let xi = res.x.rows(0, nx - 1).into_owned();
    let bvec = linalg::real_to_complex(&xi);
    let b = CMat::from_fn(r, k, |i, j| bvec[j * r + i]);
    let u = usage(&b).sqrt();
    // dual bound: with Σz = 1, min_ξ Σ z_ℓ q_ℓ(ξ) ≤ optimal s
    let zs: f64 = res.z.iter().sum();
    let mut q_sum = RMat::zeros(nx - 1, nx - 1);
    let mut b_sum = RVec::zeros(nx - 1);
    let mut r_sum = 0.0;
    for (q, z) in x_quads.iter().zip(&res.z) {
        let z = z / zs;
        q_sum += &q.q * z;
        b_sum += &q.b * (2.0 * z);
        r_sum += z * q.r;
    }
    let bound = quad_min(&q_sum, &b_sum).map_or(0.0, |v| (v + r_sum).max(0.0).sqrt());
    Ok(MinMaxSolution { b, u, bound: bound.min(u) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn max_linear_unit_ball() {
        let p = ExtractProblem {
            u: CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]),
            equalities: CMat::zeros(0, 2),
            caps: vec![(CMat::identity(2, 2), 4.0)],
        };
        let s = socp_max_linear(&p).unwrap();
        assert!((s.value - 2.0).abs() < 1e-7);
        assert!((s.a[0] - c(2.0, 0.0)).norm() < 1e-6 && s.a[1].norm() < 1e-6);
        assert!(s.bound >= s.value - 1e-9 && s.bound - s.value < 1e-7);
    }

    #[test]
    fn max_linear_orthogonal_objective_is_zero() {
        let p = ExtractProblem {
            u: CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]),
            equalities: CMat::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, 0.0)]),
            caps: vec![(CMat::identity(2, 2), 1.0)],
        };
        let s = socp_max_linear(&p).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(s.a.norm() < 1e-12);
    }

    #[test]
    fn max_linear_single_cap_closed_form() {
        // one cap a^H Ψ a ≤ η on the nullspace N of E: optimum √η ‖(N^HΨN)^{-1/2} N^H u‖
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let n = 4;
            let u = linalg::complex_gaussian(&mut rng, n, 1.0);
            let e_row = linalg::complex_gaussian(&mut rng, n, 1.0);
            let e = CMat::from_row_slice(1, n, e_row.as_slice());
            let g = CMat::from_columns(&(0..n).map(|_| linalg::complex_gaussian(&mut rng, n, 1.0)).collect::<Vec<_>>());
            let psi = linalg::hermitized(&(&g * g.adjoint()));
            let eta = 3.0;
            let s = socp_max_linear(&ExtractProblem { u: u.clone(), equalities: e.clone(), caps: vec![(psi.clone(), eta)] })
                .unwrap();
            let basis = linalg::null_space(&e, n, 1e-12);
            let red = linalg::hermitized(&(basis.adjoint() * &psi * &basis));
            let w = basis.adjoint() * &u;
            let expect = (eta * linalg::quad_form(&linalg::hpd_inverse(&red).unwrap(), &w)).sqrt();
            assert!((s.value - expect).abs() < 1e-7 * expect, "{} vs {}", s.value, expect);
            assert!((&e * &s.a).norm() < 1e-10);
            assert!(linalg::quad_form(&psi, &s.a) <= eta * (1.0 + 1e-9));
        }
    }

    #[test]
    fn max_linear_phase_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = linalg::complex_gaussian(&mut rng, 3, 1.0);
        let d = linalg::complex_gaussian(&mut rng, 3, 1.0);
        let caps = vec![(CMat::identity(3, 3), 2.0), (linalg::outer(&d), 0.3)];
        let base = socp_max_linear(&ExtractProblem { u: u.clone(), equalities: CMat::zeros(0, 3), caps: caps.clone() })
            .unwrap();
        let rot = &u * c(0.3f64.cos(), 0.3f64.sin());
        let turned = socp_max_linear(&ExtractProblem { u: rot.clone(), equalities: CMat::zeros(0, 3), caps }).unwrap();
        assert!((base.value - turned.value).abs() < 1e-8);
        assert!((u.dotc(&base.a).norm() - rot.dotc(&turned.a).norm()).abs() < 1e-8);
        assert!(base.bound - base.value <= 1e-6 * base.value);
    }

    #[test]
    fn zero_budget_cap_acts_as_equality() {
        let u = CVec::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let d = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let s = socp_max_linear(&ExtractProblem {
            u,
            equalities: CMat::zeros(0, 2),
            caps: vec![(CMat::identity(2, 2), 1.0), (linalg::outer(&d), 0.0)],
        })
        .unwrap();
        assert!(s.a[0].norm() < 1e-12);
        assert!((s.value - 1.0).abs() < 1e-7);
    }

    #[test]
    fn unbounded_direction_is_reported() {
        let d = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let r = socp_max_linear(&ExtractProblem {
            u: CVec::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]),
            equalities: CMat::zeros(0, 2),
            caps: vec![(linalg::outer(&d), 1.0)],
        });
        assert_eq!(r.unwrap_err(), Error::SocpUnbounded);
    }

    #[test]
    fn min_max_without_free_variables() {
        let f = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let d = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let s = socp_min_max_norm(&MinMaxProblem {
            f,
            n: CMat::zeros(2, 0),
            norms: vec![(CMat::identity(2, 2), 4.0), (linalg::outer(&d), 0.25)],
        })
        .unwrap();
        assert!((s.u - 2.0).abs() < 1e-12);
        assert_eq!(s.b.nrows(), 0);
    }

    #[test]
    fn min_max_single_identity_is_least_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 4;
        let f = CMat::from_columns(&(0..2).map(|_| linalg::complex_gaussian(&mut rng, m, 1.0)).collect::<Vec<_>>());
        let q = CMat::from_columns(&(0..2).map(|_| linalg::complex_gaussian(&mut rng, m, 1.0)).collect::<Vec<_>>());
        let n = q.qr().q();
        let s = socp_min_max_norm(&MinMaxProblem { f: f.clone(), n: n.clone(), norms: vec![(CMat::identity(m, m), 3.0)] })
            .unwrap();
        let b_star = -(n.adjoint() * &f);
        assert!((&s.b - &b_star).norm() < 1e-5);
        let expect = (&f + &n * &b_star).norm() / 3f64.sqrt();
        assert!((s.u - expect).abs() < 1e-7 * expect);
        assert!(s.u - s.bound <= 1e-6 * s.u);
    }

    #[test]
    fn min_max_matches_grid_search() {
        // one free complex coefficient, one user: 2 real dimensions to grid over
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 3;
        let f = CMat::from_columns(&[linalg::complex_gaussian(&mut rng, m, 1.0)]);
        let nvec = linalg::complex_gaussian(&mut rng, m, 1.0);
        let n = CMat::from_columns(&[nvec.unscale(nvec.norm())]);
        let d1 = linalg::complex_gaussian(&mut rng, m, 1.0);
        let d2 = linalg::complex_gaussian(&mut rng, m, 1.0);
        let norms = vec![(CMat::identity(m, m), 2.0), (linalg::outer(&d1), 0.5), (linalg::outer(&d2), 0.5)];
        let s = socp_min_max_norm(&MinMaxProblem { f: f.clone(), n: n.clone(), norms: norms.clone() }).unwrap();
        let eval = |re: f64, im: f64| {
            let t = &f + &n * c(re, im);
            norms.iter().map(|(phi, g)| linalg::quad_form(phi, &t.column(0).into_owned()) / g).fold(0.0, f64::max).sqrt()
        };
        let grid = |c_re: f64, c_im: f64, half: f64| {
            let steps = 200;
            let mut best = (f64::INFINITY, c_re, c_im);
            for i in 0..=steps {
                for j in 0..=steps {
                    let re = c_re - half + 2.0 * half * i as f64 / steps as f64;
                    let im = c_im - half + 2.0 * half * j as f64 / steps as f64;
                    let v = eval(re, im);
                    if v < best.0 {
                        best = (v, re, im);
                    }
                }
            }
            best
        };
        let coarse = grid(0.0, 0.0, 4.0);
        let best = grid(coarse.1, coarse.2, 0.08).0;
        assert!(s.u <= best + 1e-9);
        assert!((best - s.u) / s.u < 1e-3, "{} vs grid {}", s.u, best);
    }
}
