use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::constants::ConstantBudget;
use crate::error::{Error, Result};
use crate::leastsq::FrameMatrix;
use crate::linalg::{self, CMat};
use crate::rng;

/// Relative slack used when checking bounds recomputed by an eigen-solve.
pub const CERTIFY_TOLERANCE: f64 = 1e-10;

/// `n` vectors in `C^m`, stored row-major (row `i` is `u_i`).
///
/// The frame operator is `S = sum_i u_i u_i^*`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteFrame {
    n: usize,
    m: usize,
    rows: Vec<Complex64>,
    norm_bound: f64,
    frame_bounds: (f64, f64),
}

impl FiniteFrame {
    pub fn from_row_major(n: usize, m: usize, rows: Vec<Complex64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument(
                "a frame needs n >= 1 and m >= 1".into(),
            ));
        }
        if rows.len() != n * m {
            return Err(Error::LengthMismatch {
                expected: n * m,
                got: rows.len(),
            });
        }
        if rows.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument(
                "frame entries must be finite".into(),
            ));
        }
        let norm_bound = rows
            .chunks_exact(m)
            .map(linalg::norm_sqr)
            .fold(0.0, f64::max);
        let mut frame = FiniteFrame {
            n,
            m,
            rows,
            norm_bound,
            frame_bounds: (0.0, 0.0),
        };
        let all: Vec<usize> = (0..n).collect();
        frame.frame_bounds = frame.bounds_of(&all);
        Ok(frame)
    }

    /// Rows of `matrix` taken as frame vectors.
    pub fn from_matrix(matrix: &CMat) -> Result<Self> {
        let (n, m) = matrix.shape();
        let mut rows = Vec::with_capacity(n * m);
        for i in 0..n {
            rows.extend(matrix.row(i).iter().copied());
        }
        Self::from_row_major(n, m, rows)
    }

    /// Frame formed by the rows of `L / sqrt(n)`.
    pub fn from_frame_matrix(matrix: &FrameMatrix) -> Result<Self> {
        let n = matrix.rows();
        let scale = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
        Self::from_matrix(&(&matrix.entries * scale))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn vector(&self, i: usize) -> &[Complex64] {
        &self.rows[i * self.m..(i + 1) * self.m]
    }

    pub fn row_major(&self) -> &[Complex64] {
        &self.rows
    }

    /// `max_i |u_i|^2`.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// Extremal eigenvalues `(alpha, beta)` of the frame operator.
    pub fn frame_bounds(&self) -> (f64, f64) {
        self.frame_bounds
    }

    pub fn trace(&self) -> f64 {
        linalg::norm_sqr(&self.rows)
    }

    pub fn to_matrix(&self) -> CMat {
        CMat::from_row_slice(self.n, self.m, &self.rows)
    }

    /// `sum_{i in indices} u_i u_i^*`.
    pub fn operator_of(&self, indices: &[usize]) -> CMat {
        let mut s = CMat::zeros(self.m, self.m);
        for &i in indices {
            add_outer(&mut s, self.vector(i), 1.0);
        }
        linalg::hermitize(&mut s);
        s
    }

    /// Extremal eigenvalues of the partial frame operator over `indices`.
    pub fn bounds_of(&self, indices: &[usize]) -> (f64, f64) {
        linalg::extremal_eigenvalues(&self.operator_of(indices))
    }

    pub fn sub_frame(&self, indices: &[usize]) -> Result<FiniteFrame> {
        let mut rows = Vec::with_capacity(indices.len() * self.m);
        for &i in indices {
            if i >= self.n {
                return Err(Error::range("frame index", i as f64, "[0, n)"));
            }
            rows.extend_from_slice(self.vector(i));
        }
        Self::from_row_major(indices.len(), self.m, rows)
    }
}

/// `s += scale * u u^*`.
pub(crate) fn add_outer(s: &mut CMat, u: &[Complex64], scale: f64) {
    let m = u.len();
    for b in 0..m {
        let ub = u[b].conj() * scale;
        for a in 0..m {
            s[(a, b)] += u[a] * ub;
        }
    }
}

/// Rows of a Gaussian `n x m` matrix orthonormalised column-wise, giving a
/// tight frame with `S = I`.
pub fn random_tight_frame(n: usize, m: usize, seed: u64) -> Result<FiniteFrame> {
    if n < m || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "a tight frame in C^{m} needs n >= m >= 1, got n = {n}"
        )));
    }
    let mut rng = rng::stream(seed, 0);
    let g = CMat::from_fn(n, m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    retighten(&g)
}

/// Harmonic frame `u_i = n^{-1/2} (e^{2 pi i k j / n})_{k < m}` plus a complex
/// Gaussian perturbation of relative size `perturbation`, re-tightened.
pub fn perturbed_harmonic_frame(
    n: usize,
    m: usize,
    perturbation: f64,
    seed: u64,
) -> Result<FiniteFrame> {
    if n < m || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "a tight frame in C^{m} needs n >= m >= 1, got n = {n}"
        )));
    }
    let mut rng = rng::stream(seed, 1);
    let scale = 1.0 / (n as f64).sqrt();
    let g = CMat::from_fn(n, m, |i, k| {
        let phase = 2.0 * std::f64::consts::PI * (i * k) as f64 / n as f64;
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        (Complex64::from_polar(1.0, phase) + Complex64::new(re, im) * perturbation) * scale
    });
    retighten(&g)
}

fn retighten(g: &CMat) -> Result<FiniteFrame> {
    let s = linalg::gram(g);
    let w = linalg::inverse_sqrt_hermitian(&s)
        .ok_or_else(|| Error::InvalidArgument("generated vectors do not span".into()))?;
    FiniteFrame::from_matrix(&linalg::mul(g, &w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsampleMethod {
    BruteForcePartition,
    RecursiveHalving,
    BarrierGreedy,
}

/// What a subsample is certified against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Criterion {
    /// `#J <= c1 m` and `c2 m/n <= lambda_min`, `lambda_max <= c3 m/n`.
    Budget(ConstantBudget),
    /// `lower <= lambda_min` and `lambda_max <= upper`.
    Window { lower: f64, upper: f64 },
    /// `#J <= max_size` and `lambda_min > CERTIFY_TOLERANCE * lambda_max`.
    FullRank { max_size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleResult {
    /// Selected indices, ascending.
    pub indices: Vec<usize>,
    /// Extremal eigenvalues of `sum_{i in J} u_i u_i^*`.
    pub achieved_bounds: (f64, f64),
    pub criterion: Criterion,
    pub method: SubsampleMethod,
    pub certified: bool,
    pub n: usize,
    pub m: usize,
}

impl SubsampleResult {
    /// Builds a result whose bounds and certification flag come from a fresh
    /// eigen-solve of the selected sub-frame.
    pub fn certify(
        frame: &FiniteFrame,
        mut indices: Vec<usize>,
        method: SubsampleMethod,
        criterion: Criterion,
    ) -> Self {
        indices.sort_unstable();
        indices.dedup();
        let (lo, hi) = frame.bounds_of(&indices);
        let (n, m) = (frame.len(), frame.dim());
        let tol = CERTIFY_TOLERANCE;
        let certified = match criterion {
            Criterion::Budget(b) => {
                let scale = m as f64 / n as f64;
                indices.len() as f64 <= b.c1 * m as f64
                    && lo >= b.c2 * scale * (1.0 - tol)
                    && hi <= b.c3 * scale * (1.0 + tol)
            }
            Criterion::Window { lower, upper } => {
                lo >= lower - tol * lower.abs().max(hi) && hi <= upper * (1.0 + tol)
            }
            Criterion::FullRank { max_size } => indices.len() <= max_size && lo > tol * hi,
        };
        SubsampleResult {
            indices,
            achieved_bounds: (lo, hi),
            criterion,
            method,
            certified,
            n,
            m,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_tight_frame_is_tight() {
        let f = random_tight_frame(30, 4, 7).unwrap();
        let (lo, hi) = f.frame_bounds();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        assert!((f.trace() - 4.0).abs() < 1e-12);
        assert!(f.norm_bound() * 30.0 >= f.trace() - 1e-12);
    }

    #[test]
    fn harmonic_frame_without_noise_has_equal_norms() {
        let f = perturbed_harmonic_frame(14, 1, 0.0, 0).unwrap();
        assert!((f.norm_bound() - 1.0 / 14.0).abs() < 1e-14);
        let f = perturbed_harmonic_frame(12, 3, 0.0, 0).unwrap();
        for i in 0..12 {
            assert!((linalg::norm_sqr(f.vector(i)) - 0.25).abs() < 1e-13);
        }
    }

    #[test]
    fn operator_matches_gram_of_conjugate() {
        let f = random_tight_frame(9, 3, 2).unwrap();
        let idx = [0, 3, 4, 8];
        let s = f.operator_of(&idx);
        let sub = f.sub_frame(&idx).unwrap().to_matrix();
        let g = linalg::gram(&sub);
        assert!((&s - g.map(|z| z.conj())).norm() < 1e-13);
    }

    #[test]
    fn certification_is_recomputed() {
        let f = random_tight_frame(20, 2, 3).unwrap();
        let r = SubsampleResult::certify(
            &f,
            vec![5, 1, 1, 9],
            SubsampleMethod::BarrierGreedy,
            Criterion::FullRank { max_size: 3 },
        );
        assert_eq!(r.indices, vec![1, 5, 9]);
        assert!(r.certified);
        let r = SubsampleResult::certify(
            &f,
            vec![1],
            SubsampleMethod::BarrierGreedy,
            Criterion::FullRank { max_size: 3 },
        );
        assert!(!r.certified);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(FiniteFrame::from_row_major(2, 2, vec![Complex64::new(1.0, 0.0); 3]).is_err());
        assert!(random_tight_frame(2, 3, 0).is_err());
    }
}
