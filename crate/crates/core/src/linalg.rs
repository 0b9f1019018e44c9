//! Small dense complex linear-algebra helpers and the M×M multiplication counter.
//!
//! The counter tallies every cubic-cost dense operation (product, inversion,
//! factorization) on the M×M matrices used by the DPC solvers. It is thread-local so
//! concurrent solver instances do not interfere.

use std::cell::Cell;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

thread_local! {
    static MATMULS: Cell<u64> = const { Cell::new(0) };
    static PAUSED: Cell<bool> = const { Cell::new(false) };
}

pub fn tick(n: u64) {
    if !PAUSED.with(|p| p.get()) {
        MATMULS.with(|c| c.set(c.get() + n));
    }
}

pub fn matmul_count() -> u64 {
    MATMULS.with(|c| c.get())
}

pub fn reset_matmul_count() {
    MATMULS.with(|c| c.set(0));
}

/// Runs `f` without charging its work to the counter (trace bookkeeping).
pub fn uncounted<T>(f: impl FnOnce() -> T) -> T {
    let prev = PAUSED.with(|p| p.replace(true));
    let out = f();
    PAUSED.with(|p| p.set(prev));
    out
}

pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Counted dense product.
pub fn mm(a: &CMat, b: &CMat) -> CMat {
    tick(1);
    a * b
}

/// Cholesky factor of a Hermitian matrix, `None` unless positive definite.
/// The complex factorization itself accepts negative pivots (taking complex
/// square roots), so the pivots are checked here.
pub fn hpd_cholesky(a: &CMat) -> Option<Cholesky<C64, nalgebra::Dyn>> {
    if a.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return None;
    }
    let chol = Cholesky::new(hermitized(a))?;
    let l = chol.l_dirty();
    let ok = (0..a.nrows()).all(|i| {
        let p = l[(i, i)];
        p.re > 0.0 && p.im.abs() <= 1e-12 * p.re && p.re.is_finite()
    });
    ok.then_some(chol)
}

/// Inverse of a Hermitian positive definite matrix; `None` if not positive definite.
pub fn hpd_inverse(a: &CMat) -> Option<CMat> {
    tick(1);
    let chol = hpd_cholesky(a)?;
    let inv = chol.inverse();
    Some(hermitized(&inv))
}

/// `log det` of a Hermitian positive definite matrix.
pub fn hpd_logdet(a: &CMat) -> Option<f64> {
    tick(1);
    let chol = hpd_cholesky(a)?;
    let l = chol.l_dirty();
    Some((0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

pub fn hermitized(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix: real eigenvalues, unitary eigenvectors.
pub fn hermitian_eigen(a: &CMat) -> (RVec, CMat) {
    let eig = SymmetricEigen::new(hermitized(a));
    (eig.eigenvalues, eig.eigenvectors)
}

pub fn hermitian_eig_range(a: &CMat) -> (f64, f64) {
    if a.nrows() == 0 {
        return (0.0, 0.0);
    }
    let (vals, _) = hermitian_eigen(a);
    (vals.min(), vals.max())
}

/// PSD test with tolerance relative to the largest eigenvalue.
pub fn is_psd(a: &CMat, rel_tol: f64) -> bool {
    let (lo, hi) = hermitian_eig_range(a);
    lo >= -rel_tol * hi.abs().max(f64::MIN_POSITIVE)
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    (a - a.adjoint()).iter().all(|z| z.norm() <= tol * scale)
}

/// `Re(x^H A y)`.
pub fn quad_form(a: &CMat, x: &CVec) -> f64 {
    x.dotc(&(a * x)).re
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = c(0.0, 0.0);
    for i in 0..n {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn outer(x: &CVec) -> CMat {
    x * x.adjoint()
}

/// Real symmetric embedding `[[Re A, -Im A], [Im A, Re A]]` so that
/// `x^H A x = ξ^T R ξ` with `ξ = [Re x; Im x]`.
pub fn hermitian_to_real(a: &CMat) -> RMat {
    let n = a.nrows();
    let mut r = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = a[(i, j)];
            r[(i, j)] = z.re;
            r[(i, j + n)] = -z.im;
            r[(i + n, j)] = z.im;
            r[(i + n, j + n)] = z.re;
        }
    }
    (&r + r.transpose()) * 0.5
}

/// `[Re x; Im x]`.
pub fn complex_to_real(x: &CVec) -> RVec {
    let n = x.len();
    RVec::from_fn(2 * n, |i, _| if i < n { x[i].re } else { x[i - n].im })
}

pub fn real_to_complex(xi: &RVec) -> CVec {
    let n = xi.len() / 2;
    CVec::from_fn(n, |i, _| c(xi[i], xi[i + n]))
}

/// Orthonormal basis of the orthogonal complement of the column span of `u`,
/// where `u` has orthonormal columns.
pub fn orthonormal_complement(u: &CMat) -> CMat {
    let m = u.nrows();
    let k = u.ncols();
    if k >= m {
        return CMat::zeros(m, 0);
    }
    let proj = CMat::identity(m, m) - u * u.adjoint();
    let (vals, vecs) = hermitian_eigen(&proj);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let cols: Vec<CVec> = idx[..m - k].iter().map(|&i| vecs.column(i).into_owned()).collect();
    CMat::from_columns(&cols)
}

/// Orthonormal basis of the null space of `e` (rows are constraints), relative tolerance `tol`.
pub fn null_space(e: &CMat, n: usize, tol: f64) -> CMat {
    if e.nrows() == 0 {
        return CMat::identity(n, n);
    }
    let gram = e.adjoint() * e;
    let (vals, vecs) = hermitian_eigen(&gram);
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<CVec> = (0..n)
        .filter(|&i| vals[i] <= tol * top.max(f64::MIN_POSITIVE))
        .map(|i| vecs.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        CMat::zeros(n, 0)
    } else {
        CMat::from_columns(&cols)
    }
}

/// Euclidean projection onto `{x ≥ 0, Σx = budget}`.
pub fn project_simplex(v: &[f64], budget: f64) -> Vec<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let cand = (cum - budget) / (i as f64 + 1.0);
        if ui - cand > 0.0 {
            theta = cand;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Circularly symmetric complex Gaussian vector with per-entry variance `var`.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, var: f64) -> CVec {
    use rand_distr::{Distribution, StandardNormal};
    let s = (var / 2.0).sqrt();
    CVec::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(s * re, s * im)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection_hits_budget() {
        let p = project_simplex(&[3.0, -1.0, 0.5], 2.0);
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
        assert_eq!(p[1], 0.0);
        // already feasible points are fixed
        let q = project_simplex(&[0.5, 1.5], 2.0);
        assert!((q[0] - 0.5).abs() < 1e-12 && (q[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn real_embedding_preserves_quadratic_forms() {
        let a = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.3, -0.7), c(0.3, 0.7), c(1.0, 0.0)]);
        let x = CVec::from_vec(vec![c(0.4, -1.2), c(-0.8, 0.1)]);
        let r = hermitian_to_real(&a);
        let xi = complex_to_real(&x);
        assert!((quad_form(&a, &x) - xi.dot(&(&r * &xi))).abs() < 1e-12);
        assert_eq!(real_to_complex(&xi), x);
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let u = CMat::from_columns(&[CVec::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0)])]);
        let perp = orthonormal_complement(&u);
        assert_eq!(perp.shape(), (3, 2));
        assert!((perp.adjoint() * &perp - CMat::identity(2, 2)).norm() < 1e-12);
        assert!((u.adjoint() * &perp).norm() < 1e-12);
    }

    #[test]
    fn indefinite_matrices_are_rejected() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![c(2.0, 0.0), c(-1.0, 0.0)]));
        assert!(hpd_inverse(&a).is_none());
        assert!(hpd_logdet(&a).is_none());
        let b = CMat::from_diagonal(&CVec::from_vec(vec![c(2.0, 0.0), c(3.0, 0.0)]));
        assert!((hpd_logdet(&b).unwrap() - 6f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn uncounted_work_is_not_charged() {
        reset_matmul_count();
        let a = CMat::identity(3, 3);
        let _ = mm(&a, &a);
        uncounted(|| mm(&a, &a));
        assert_eq!(matmul_count(), 1);
    }
}
