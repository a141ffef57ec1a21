//! Dense complex linear algebra helpers.
//!
//! nalgebra only dispatches to the blocked `matrixmultiply` kernels for real
//! scalars, so the large complex products used throughout the crate are
//! assembled from four real products instead.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

fn split(a: &CMat) -> (DMatrix<f64>, DMatrix<f64>) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

fn join(re: DMatrix<f64>, im: DMatrix<f64>) -> CMat {
    re.zip_map(&im, Complex64::new)
}

/// `a * b` for complex matrices.
pub fn mul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    join(re, im)
}

/// `a^* b` (conjugate transpose of `a` times `b`).
pub fn adjoint_mul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.nrows(), b.nrows(), "row counts differ");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let art = ar.transpose();
    let ait = ai.transpose();
    let re = &art * &br + &ait * &bi;
    let im = &art * &bi - &ait * &br;
    join(re, im)
}

/// `a b^*`.
pub fn mul_adjoint(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.ncols(), "column counts differ");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let brt = br.transpose();
    let bit = bi.transpose();
    let re = &ar * &brt + &ai * &bit;
    let im = &ai * &brt - &ar * &bit;
    join(re, im)
}

/// Hermitian Gram matrix `a^* a`, symmetrised to remove round-off asymmetry.
pub fn gram(a: &CMat) -> CMat {
    let mut g = adjoint_mul(a, a);
    hermitize(&mut g);
    g
}

/// Replaces `m` by `(m + m^*) / 2`.
pub fn hermitize(m: &mut CMat) {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    for i in 0..n {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut h = m.clone();
    hermitize(&mut h);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `(lambda_min, lambda_max)` of a Hermitian matrix.
pub fn extremal_eigenvalues(m: &CMat) -> (f64, f64) {
    let ev = hermitian_eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0.0, 0.0),
    }
}

/// Largest eigenvalue together with a unit eigenvector.
pub fn top_eigenpair(m: &CMat) -> (f64, CVec) {
    let mut h = m.clone();
    hermitize(&mut h);
    let eig = h.symmetric_eigen();
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty matrix");
    (val, eig.eigenvectors.column(idx).into_owned())
}

/// Spectral norm of a Hermitian matrix: `max |lambda|`.
pub fn hermitian_spectral_norm(m: &CMat) -> f64 {
    let (lo, hi) = extremal_eigenvalues(m);
    lo.abs().max(hi.abs())
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Inverse Hermitian square root of a positive definite matrix, or `None`
/// when some eigenvalue is not positive.
pub fn inverse_sqrt_hermitian(m: &CMat) -> Option<CMat> {
    let mut h = m.clone();
    hermitize(&mut h);
    let eig = h.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let n = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = Complex64::new(1.0 / l.sqrt(), 0.0);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    Some(mul_adjoint(&scaled, &eig.eigenvectors))
}

/// Squared Euclidean norm of a complex slice.
pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
