//! Evaluation matrices and the density-weighted least-squares recovery
//! operator.

use std::sync::OnceLock;

use nalgebra::linalg::QR;
use num_complex::Complex64;

use crate::density::NodeSet;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::spectrum::SpectralBasis;

/// `tau_min / tau_max` at or below which a matrix counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `n x (m-1)` matrix of basis evaluations at the nodes, optionally
/// weighted row-wise by `rho_m(x)^{-1/2}`.
#[derive(Debug, Clone)]
pub struct FrameMatrix {
    pub entries: CMat,
    pub weighted: bool,
    pub nodes: Option<NodeSet>,
    extremal: OnceLock<(f64, f64)>,
}

impl FrameMatrix {
    /// Wraps an explicit matrix (e.g. read back from disk).
    pub fn from_entries(entries: CMat, weighted: bool) -> Self {
        FrameMatrix {
            entries,
            weighted,
            nodes: None,
            extremal: OnceLock::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    /// `(tau_min, tau_max)`, computed once.
    pub fn extremal_singular_values(&self) -> (f64, f64) {
        *self.extremal.get_or_init(|| {
            let sv = linalg::singular_values(&self.entries);
            match (sv.last(), sv.first()) {
                (Some(&lo), Some(&hi)) => (if sv.len() < self.cols() { 0.0 } else { lo }, hi),
                _ => (0.0, 0.0),
            }
        })
    }

    pub fn check_rank(&self) -> Result<()> {
        let (lo, hi) = self.extremal_singular_values();
        let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
        if ratio <= RANK_TOLERANCE {
            return Err(Error::RankDeficient {
                ratio,
                tolerance: RANK_TOLERANCE,
            });
        }
        Ok(())
    }
}

/// Fills `out` (length `m - 1`) with row `i` of the (weighted) matrix.
pub fn fill_row(
    basis: &SpectralBasis,
    nodes: &NodeSet,
    i: usize,
    m: usize,
    weighted: bool,
    out: &mut [Complex64],
) {
    fill_row_range(basis, nodes, i, 0..m - 1, weighted, out);
}

/// Row `i` restricted to the zero-based basis indices `range`.
pub fn fill_row_range(
    basis: &SpectralBasis,
    nodes: &NodeSet,
    i: usize,
    range: std::ops::Range<usize>,
    weighted: bool,
    out: &mut [Complex64],
) {
    if weighted {
        let rho = nodes.density[i];
        if rho == 0.0 {
            out.fill(ZERO);
            return;
        }
        basis.eval_into(nodes.node(i), range, out);
        let scale = 1.0 / rho.sqrt();
        for v in out.iter_mut() {
            *v *= scale;
        }
    } else {
        basis.eval_into(nodes.node(i), range, out);
    }
}

/// Evaluation matrix for the basis indices `range` (zero-based) at `nodes`.
pub fn evaluation_block(
    basis: &SpectralBasis,
    nodes: &NodeSet,
    range: std::ops::Range<usize>,
    weighted: bool,
) -> CMat {
    let n = nodes.len();
    let k = range.len();
    let mut mat = CMat::zeros(n, k);
    let mut row = vec![ZERO; k];
    for i in 0..n {
        fill_row_range(basis, nodes, i, range.clone(), weighted, &mut row);
        for (j, v) in row.iter().enumerate() {
            mat[(i, j)] = *v;
        }
    }
    mat
}

/// Matrix `(eta_l(x^j))` with `l < m`, or its weighted form
/// `(eta_l(x^j) / sqrt(rho_m(x^j)))` with zero rows where `rho_m = 0`.
pub fn build_matrix(
    basis: &SpectralBasis,
    nodes: &NodeSet,
    m: usize,
    weighted: bool,
) -> Result<FrameMatrix> {
    if m < 2 {
        return Err(Error::range("m", m, ">= 2"));
    }
    if basis.count() < m - 1 {
        return Err(Error::range("m", m, format!("[2, {}]", basis.count() + 1)));
    }
    if nodes.len() < m - 1 {
        return Err(Error::InvalidArgument(format!(
            "{} nodes cannot determine {} coefficients",
            nodes.len(),
            m - 1
        )));
    }
    Ok(FrameMatrix {
        entries: evaluation_block(basis, nodes, 0..m - 1, weighted),
        weighted,
        nodes: Some(nodes.clone()),
        extremal: OnceLock::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMethod {
    /// Householder QR of the matrix itself.
    #[default]
    Qr,
    /// Cholesky factorisation of `L^* L`; kept for cross-checking.
    NormalEquations,
}

/// Factorised least-squares solver for a full-rank frame matrix.
#[derive(Debug, Clone)]
pub struct RecoveryOperator {
    /// Thin orthonormal factor, `n x (m-1)`.
    q: CMat,
    /// Upper triangular factor, `(m-1) x (m-1)`.
    r: CMat,
    /// `rho_m(x^j)^{-1/2}`, or 0 where the density vanishes; `None` when
    /// samples are used unweighted.
    sample_weights: Option<Vec<f64>>,
    method: SolveMethod,
    gram: Option<CMat>,
    tau: (f64, f64),
}

impl RecoveryOperator {
    pub fn new(matrix: &FrameMatrix) -> Result<Self> {
        Self::with_method(matrix, SolveMethod::Qr)
    }

    pub fn with_method(matrix: &FrameMatrix, method: SolveMethod) -> Result<Self> {
        let n = matrix.rows();
        let k = matrix.cols();
        if n < k || k == 0 {
            return Err(Error::InvalidArgument(format!(
                "least squares needs rows >= cols >= 1, got {n} x {k}"
            )));
        }
        let qr = QR::new(matrix.entries.clone());
        let q = qr.q();
        let r = qr.r();
        // The singular values of R are those of L.
        let sv = linalg::singular_values(&r);
        let tau = (*sv.last().unwrap(), sv[0]);
        let ratio = if tau.1 > 0.0 { tau.0 / tau.1 } else { 0.0 };
        if ratio <= RANK_TOLERANCE {
            return Err(Error::RankDeficient {
                ratio,
                tolerance: RANK_TOLERANCE,
            });
        }
        let _ = matrix.extremal.set(tau);
        let sample_weights = if matrix.weighted {
            let nodes = matrix.nodes.as_ref().ok_or_else(|| {
                Error::InvalidArgument("weighted matrix without node densities".into())
            })?;
            Some(
                nodes
                    .density
                    .iter()
                    .map(|&rho| if rho == 0.0 { 0.0 } else { 1.0 / rho.sqrt() })
                    .collect(),
            )
        } else {
            None
        };
        let gram = match method {
            SolveMethod::Qr => None,
            SolveMethod::NormalEquations => Some(linalg::gram(&matrix.entries)),
        };
        Ok(RecoveryOperator {
            q,
            r,
            sample_weights,
            method,
            gram,
            tau,
        })
    }

    pub fn rows(&self) -> usize {
        self.q.nrows()
    }

    pub fn cols(&self) -> usize {
        self.r.ncols()
    }

    pub fn q(&self) -> &CMat {
        &self.q
    }

    pub fn r(&self) -> &CMat {
        &self.r
    }

    /// `(tau_min, tau_max)` of the factorised matrix.
    pub fn tau(&self) -> (f64, f64) {
        self.tau
    }

    /// Minimiser of `||L c - g||_2` for right-hand sides already in weighted
    /// coordinates (one column per right-hand side).
    pub fn solve_weighted_many(&self, g: &CMat) -> Result<CMat> {
        if g.nrows() != self.rows() {
            return Err(Error::LengthMismatch {
                expected: self.rows(),
                got: g.nrows(),
            });
        }
        match self.method {
            SolveMethod::Qr => {
                let rhs = linalg::adjoint_mul(&self.q, g);
                self.r
                    .solve_upper_triangular(&rhs)
                    .ok_or_else(|| Error::Consistency("singular triangular factor".into()))
            }
            SolveMethod::NormalEquations => {
                let gram = self
                    .gram
                    .as_ref()
                    .expect("normal equations keep the Gram matrix");
                // L^* g = R^* Q^* g, with L = QR.
                let lstar_g = self.r.adjoint() * linalg::adjoint_mul(&self.q, g);
                let chol = gram.clone().cholesky().ok_or(Error::RankDeficient {
                    ratio: 0.0,
                    tolerance: RANK_TOLERANCE,
                })?;
                Ok(chol.solve(&lstar_g))
            }
        }
    }

    /// As [`solve_weighted_many`](Self::solve_weighted_many) for one vector.
    pub fn solve_weighted(&self, g: &[Complex64]) -> Result<CVec> {
        let rhs = CMat::from_column_slice(g.len(), 1, g);
        Ok(self.solve_weighted_many(&rhs)?.column(0).into_owned())
    }

    /// Coefficients of the approximant from raw function values `f(x^j)`:
    /// samples are weighted by `rho_m(x^j)^{-1/2}` (zero where the density
    /// vanishes) and passed to the least-squares solve.
    pub fn apply(&self, samples: &[Complex64]) -> Result<CVec> {
        if samples.len() != self.rows() {
            return Err(Error::LengthMismatch {
                expected: self.rows(),
                got: samples.len(),
            });
        }
        match &self.sample_weights {
            None => self.solve_weighted(samples),
            Some(w) => {
                let g: Vec<Complex64> = samples.iter().zip(w).map(|(f, wi)| f * *wi).collect();
                self.solve_weighted(&g)
            }
        }
    }

    /// Residual `||L c - g||_2` in weighted coordinates.
    pub fn residual(&self, matrix: &FrameMatrix, samples: &[Complex64], coef: &CVec) -> f64 {
        let g: Vec<Complex64> = match &self.sample_weights {
            None => samples.to_vec(),
            Some(w) => samples.iter().zip(w).map(|(f, wi)| f * *wi).collect(),
        };
        let fitted = &matrix.entries * coef;
        fitted
            .iter()
            .zip(&g)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Least-squares solution of `L c ~ g` (samples already weighted).
pub fn solve_least_squares(matrix: &FrameMatrix, samples: &[Complex64]) -> Result<CVec> {
    RecoveryOperator::new(matrix)?.solve_weighted(samples)
}

/// `(1/tau_max, 1/tau_min)`, bracketing `||(L^*L)^{-1} L^*||_{2->2}`.
pub fn operator_norm_bounds(matrix: &FrameMatrix) -> Result<(f64, f64)> {
    matrix.check_rank()?;
    let (lo, hi) = matrix.extremal_singular_values();
    Ok((1.0 / hi, 1.0 / lo))
}

/// Whether a pseudo-inverse norm lies in `[sqrt(2/(3n)), sqrt(2/n)]`, the
/// range implied by frame bounds `n/2 <= tau^2 <= 3n/2`.
pub fn pseudo_inverse_in_frame_range(norm: f64, n: usize) -> bool {
    let n = n as f64;
    let slack = 1e-12;
    norm >= (2.0 / (3.0 * n)).sqrt() * (1.0 - slack) && norm <= (2.0 / n).sqrt() * (1.0 + slack)
}
