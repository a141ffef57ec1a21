use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concentration::{row_block, GRAM_CHUNK};
use crate::density::NodeSet;
use crate::error::{Error, Result};
use crate::leastsq::{build_matrix, RecoveryOperator};
use crate::linalg::{self, CMat};
use crate::spectrum::{enumerate_spectrum, KernelModel, SpectralBasis};

/// Truncation is placed where `sigma_{M+1} <= TRUNCATION_RATIO * sigma_m`.
pub const TRUNCATION_RATIO: f64 = 0.1;

/// Largest node count for which the kernel-based tail bracket is formed
/// (it needs `n^2` kernel evaluations).
pub const KERNEL_TAIL_LIMIT: usize = 8192;

const MAX_TRUNCATION: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailCertificate {
    /// The model has no eigenvalues beyond the truncation.
    Exact,
    /// Bracketed with the closed-form kernel.
    Kernel,
    /// Bounded by the trace of the weighted tail kernel.
    Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecoveryMethod {
    /// Nodes supplied by the caller.
    Given,
    RandomOnly,
    RandomThenSubsample,
}

impl std::fmt::Display for RecoveryMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RecoveryMethod::Given => "given",
            RecoveryMethod::RandomOnly => "random",
            RecoveryMethod::RandomThenSubsample => "subsample",
        })
    }
}

impl std::str::FromStr for RecoveryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "given" => Ok(RecoveryMethod::Given),
            "random" | "random-only" => Ok(RecoveryMethod::RandomOnly),
            "subsample" | "random-then-subsample" => Ok(RecoveryMethod::RandomThenSubsample),
            other => Err(Error::Parse(format!("unknown recovery method {other:?}"))),
        }
    }
}

/// Worst-case `L_2` error of weighted least squares over the unit ball of
/// `H(K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub m: usize,
    pub n_drawn: usize,
    pub n_used: usize,
    /// Basis functions `1..=m_trunc` are handled exactly.
    pub m_trunc: usize,
    /// Lower end of the certified bracket (includes the tail beyond
    /// `m_trunc` when the kernel is available).
    pub wce: f64,
    /// Upper end of the certified bracket.
    pub wce_upper: f64,
    /// Error of the operator restricted to basis functions up to `m_trunc`.
    pub wce_truncated: f64,
    pub sigma_m: f64,
    pub bound_rhs: f64,
    pub tail_certificate: TailCertificate,
    /// Extremal singular values of the weighted matrix on the used nodes.
    pub tau: (f64, f64),
    pub method: RecoveryMethod,
    pub seed: u64,
    pub retries: usize,
}

/// Smallest `M >= m` with `sigma_{M+1} <= 0.1 sigma_m`, or the rank of a
/// finite model.
pub fn default_truncation(model: &KernelModel, m: usize) -> Result<usize> {
    if m < 2 {
        return Err(Error::range("m", m, ">= 2"));
    }
    if let Some(rank) = model.rank() {
        if rank + 1 < m {
            return Err(Error::range("m", m, format!("[2, {}]", rank + 1)));
        }
        return Ok(rank);
    }
    let mut count = 16 * m;
    loop {
        let basis = enumerate_spectrum(model, count)?;
        let target = TRUNCATION_RATIO * basis.sigma(m);
        if let Some(k) = (m + 1..=count).find(|&k| basis.sigma(k) <= target) {
            return Ok(k - 1);
        }
        if count >= MAX_TRUNCATION {
            return Err(Error::Truncation(format!(
                "sigma does not drop to {TRUNCATION_RATIO} sigma_{m} within {count} terms"
            )));
        }
        count *= 4;
    }
}

/// Basis long enough for [`worst_case_error`] at truncation `m_trunc`.
pub fn error_basis(model: &KernelModel, m_trunc: usize) -> Result<SpectralBasis> {
    enumerate_spectrum(model, m_trunc + 1)
}

fn sigma_or_zero(basis: &SpectralBasis, k: usize) -> f64 {
    if k >= 1 && k <= basis.count() {
        basis.sigma(k)
    } else {
        0.0
    }
}

/// Pieces of the error operator `a -> (sigma_k a_k)_{k >= m} - S(...)`.
struct ErrorOperator {
    op: RecoveryOperator,
    /// `S` applied to the basis functions `m..=m_trunc`, `(m-1) x (M-m+1)`.
    aliasing: CMat,
    /// `sigma_k^2` for `k = m..=m_trunc`.
    diag: Vec<f64>,
    sigma_next_sq: f64,
    rest: Rest,
}

enum Rest {
    None,
    /// `S K_rest S^*` on coefficient space.
    Kernel(CMat),
    /// Scalar bound on the norm of `S K_rest S^*`.
    Trace(f64),
}

fn check_inputs(basis: &SpectralBasis, nodes: &NodeSet, m: usize, m_trunc: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::range("m", m, ">= 2"));
    }
    if m_trunc + 1 < m {
        return Err(Error::range("m_trunc", m_trunc, format!(">= {}", m - 1)));
    }
    let needed = match basis.model.rank() {
        Some(rank) => m_trunc.min(rank),
        None => m_trunc + 1,
    };
    if basis.count() < needed {
        return Err(Error::Truncation(format!(
            "truncation at {m_trunc} needs {needed} eigenpairs, basis has {}",
            basis.count()
        )));
    }
    if nodes.dim != basis.dim() {
        return Err(Error::LengthMismatch {
            expected: basis.dim(),
            got: nodes.dim,
        });
    }
    Ok(())
}

/// `Q^* B` where `B` is the weighted evaluation matrix of the basis indices
/// `0..cols`, scaled column-wise by `sigma`.
fn projected_evaluations(basis: &SpectralBasis, nodes: &NodeSet, q: &CMat, cols: usize) -> CMat {
    let n = nodes.len();
    let starts: Vec<usize> = (0..n).step_by(GRAM_CHUNK).collect();
    let parts: Vec<CMat> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + GRAM_CHUNK).min(n);
            let mut block = row_block(basis, nodes, start..end, 0..cols, true);
            for j in 0..cols {
                block.column_mut(j).scale_mut(basis.sigmas[j]);
            }
            let q_rows = q.rows(start, end - start).into_owned();
            linalg::adjoint_mul(&q_rows, &block)
        })
        .collect();
    let mut out = CMat::zeros(q.ncols(), cols);
    for p in parts {
        out += p;
    }
    out
}

/// `Q^* K_w Q` with `K_w(x, y) = K(x, y) / sqrt(rho(x) rho(y))`.
fn projected_kernel(model: &KernelModel, nodes: &NodeSet, q: &CMat) -> CMat {
    let n = nodes.len();
    let inv_sqrt: Vec<f64> = nodes
        .density
        .iter()
        .map(|&r| if r > 0.0 { 1.0 / r.sqrt() } else { 0.0 })
        .collect();
    let starts: Vec<usize> = (0..n).step_by(GRAM_CHUNK / 4).collect();
    let parts: Vec<CMat> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + GRAM_CHUNK / 4).min(n);
            let block = CMat::from_fn(end - start, n, |r, j| {
                let i = start + r;
                let k = model
                    .kernel(nodes.node(i), nodes.node(j))
                    .expect("closed-form kernel checked by caller");
                Complex64::new(k * inv_sqrt[i] * inv_sqrt[j], 0.0)
            });
            let kq = linalg::mul(&block, q);
            let q_rows = q.rows(start, end - start).into_owned();
            linalg::adjoint_mul(&q_rows, &kq)
        })
        .collect();
    let mut out = CMat::zeros(q.ncols(), q.ncols());
    for p in parts {
        out += p;
    }
    linalg::hermitize(&mut out);
    out
}

/// `R^{-1} X R^{-*}` for Hermitian `X`.
fn congruence_inverse(r: &CMat, x: &CMat) -> Result<CMat> {
    let y = r
        .solve_upper_triangular(x)
        .ok_or_else(|| Error::Consistency("singular triangular factor".into()))?;
    let z = r
        .solve_upper_triangular(&y.adjoint())
        .ok_or_else(|| Error::Consistency("singular triangular factor".into()))?;
    let mut f = z.adjoint();
    linalg::hermitize(&mut f);
    Ok(f)
}

impl ErrorOperator {
    fn new(
        basis: &SpectralBasis,
        nodes: &NodeSet,
        m: usize,
        m_trunc: usize,
        with_rest: bool,
    ) -> Result<Self> {
        check_inputs(basis, nodes, m, m_trunc)?;
        let matrix = build_matrix(basis, nodes, m, true)?;
        let op = RecoveryOperator::new(&matrix)?;
        let cols = match basis.model.rank() {
            Some(rank) => m_trunc.min(rank),
            None => m_trunc,
        };
        let projected = projected_evaluations(basis, nodes, op.q(), cols);
        let tail = projected.columns(m - 1, cols - (m - 1)).into_owned();
        let aliasing = op
            .r()
            .solve_upper_triangular(&tail)
            .ok_or_else(|| Error::Consistency("singular triangular factor".into()))?;
        let diag = (m..=cols).map(|k| basis.lambdas[k - 1]).collect();
        let sigma_next = sigma_or_zero(basis, cols + 1);
        let has_rest = match basis.model.rank() {
            Some(rank) => rank > cols,
            None => true,
        };
        let rest = if !with_rest || !has_rest {
            Rest::None
        } else if nodes.len() <= KERNEL_TAIL_LIMIT
            && basis.model.kernel(nodes.node(0), nodes.node(0)).is_some()
        {
            let mut kq = projected_kernel(&basis.model, nodes, op.q());
            kq -= linalg::mul_adjoint(&projected, &projected);
            linalg::hermitize(&mut kq);
            Rest::Kernel(congruence_inverse(op.r(), &kq)?)
        } else {
            let trace: f64 = if basis.model.is_torus() {
                let t = basis.tail_sum(cols + 1);
                nodes.density.iter().map(|&r| t.upper() / r).sum()
            } else {
                (0..nodes.len())
                    .map(|i| basis.tail_at(nodes.node(i), cols + 1) / nodes.density[i])
                    .sum()
            };
            let tau_min = op.tau().0;
            Rest::Trace(trace / (tau_min * tau_min))
        };
        Ok(ErrorOperator {
            op,
            aliasing,
            diag,
            sigma_next_sq: sigma_next * sigma_next,
            rest,
        })
    }

    /// Largest eigenvalue of `A diag(1/(lambda - d)) A^* + scale * rest`.
    fn secular(&self, lambda: f64, rest_scale: f64) -> f64 {
        let mut scaled = self.aliasing.clone();
        for (j, &d) in self.diag.iter().enumerate() {
            scaled.column_mut(j).scale_mut(1.0 / (lambda - d).sqrt());
        }
        let mut f = linalg::mul_adjoint(&scaled, &scaled);
        match &self.rest {
            Rest::Kernel(k) if rest_scale > 0.0 => f += k * Complex64::new(rest_scale, 0.0),
            Rest::Trace(b) if rest_scale > 0.0 => {
                for i in 0..f.nrows() {
                    f[(i, i)] += Complex64::new(rest_scale * b, 0.0);
                }
            }
            _ => {}
        }
        linalg::extremal_eigenvalues(&f).1
    }

    fn rest_trace(&self) -> f64 {
        match &self.rest {
            Rest::None => 0.0,
            Rest::Kernel(k) => k.diagonal().iter().map(|z| z.re.max(0.0)).sum(),
            Rest::Trace(b) => b * self.aliasing.nrows() as f64,
        }
    }

    /// Largest `lambda` with `secular(lambda) = 1`, or the largest diagonal
    /// entry when the secular function never reaches 1 above it.
    fn largest_eigenvalue(&self, scale: impl Fn(f64) -> f64) -> f64 {
        let base = self
            .diag
            .first()
            .copied()
            .unwrap_or(0.0)
            .max(self.sigma_next_sq);
        let frob: f64 = self.aliasing.iter().map(|z| z.norm_sqr()).sum();
        let total = frob + self.rest_trace();
        if total == 0.0 {
            return base;
        }
        let h = |t: f64| {
            let lambda = base + t;
            self.secular(lambda, scale(lambda)) - 1.0
        };
        let mut hi = total * (1.0 + 1e-12) + f64::MIN_POSITIVE;
        let mut lo = (base * 1e-15).max(hi * 1e-30);
        let mut f_lo = h(lo);
        if f_lo <= 0.0 {
            return base;
        }
        let mut f_hi = h(hi);
        // Geometric bisection until the bracket is narrow, then Illinois.
        while hi / lo > 1.01 {
            let mid = (lo * hi).sqrt();
            let f_mid = h(mid);
            if f_mid > 0.0 {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
                f_hi = f_mid;
            }
        }
        let mut side = 0;
        for _ in 0..100 {
            if hi - lo <= 1e-15 * (base + hi) {
                break;
            }
            let mut t = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            if !(t > lo && t < hi) {
                t = 0.5 * (lo + hi);
            }
            let f_t = h(t);
            if f_t > 0.0 {
                lo = t;
                f_lo = f_t;
                if side == 1 {
                    f_hi *= 0.5;
                }
                side = 1;
            } else {
                hi = t;
                f_hi = f_t;
                if side == -1 {
                    f_lo *= 0.5;
                }
                side = -1;
            }
        }
        base + 0.5 * (lo + hi)
    }
}

/// Worst-case error of the weighted least-squares operator on `nodes`,
/// reported as a bracket: basis functions `1..=m_trunc` enter exactly and
/// the remaining tail is bounded with the closed-form kernel when one is
/// available and `n <= KERNEL_TAIL_LIMIT`, and by a trace bound otherwise.
///
/// The squared error is the largest eigenvalue of `D^2 + A^* A`, where `D`
/// holds `sigma_k` for `k >= m` and `A` maps tail coefficients to the
/// least-squares coefficients of the sampled tail. It is found from the
/// `(m-1) x (m-1)` secular equation `lambda_max(A (lambda - D^2)^{-1} A^*) = 1`.
pub fn worst_case_error(
    basis: &SpectralBasis,
    nodes: &NodeSet,
    m: usize,
    m_trunc: usize,
) -> Result<ErrorReport> {
    let e = ErrorOperator::new(basis, nodes, m, m_trunc, true)?;
    let truncated = e.largest_eigenvalue(|_| 0.0);
    let (lower, upper) = match e.rest {
        Rest::None => (truncated, truncated),
        Rest::Kernel(_) => {
            let next = e.sigma_next_sq;
            (
                e.largest_eigenvalue(|l| 1.0 / l),
                e.largest_eigenvalue(|l| 1.0 / (l - next)),
            )
        }
        Rest::Trace(_) => {
            let next = e.sigma_next_sq;
            (truncated, e.largest_eigenvalue(|l| 1.0 / (l - next)))
        }
    };
    let certificate = match e.rest {
        Rest::None => TailCertificate::Exact,
        Rest::Kernel(_) => TailCertificate::Kernel,
        Rest::Trace(_) => TailCertificate::Trace,
    };
    Ok(ErrorReport {
        m,
        n_drawn: nodes.len(),
        n_used: nodes.len(),
        m_trunc,
        wce: lower.sqrt(),
        wce_upper: upper.sqrt().max(lower.sqrt()),
        wce_truncated: truncated.sqrt(),
        sigma_m: sigma_or_zero(basis, m),
        bound_rhs: super::paper_bound_rhs(basis, m)?,
        tail_certificate: certificate,
        tau: e.op.tau(),
        method: RecoveryMethod::Given,
        seed: nodes.seed,
        retries: 0,
    })
}

/// The truncated error operator as an explicit matrix: rows `0..m-1` hold
/// `-A`, the remaining rows `diag(sigma_k)` for `k = m..=m_trunc`. Its
/// largest singular value is the truncated worst-case error.
pub fn truncated_error_matrix(
    basis: &SpectralBasis,
    nodes: &NodeSet,
    m: usize,
    m_trunc: usize,
) -> Result<CMat> {
    let e = ErrorOperator::new(basis, nodes, m, m_trunc, false)?;
    let (head, cols) = (e.aliasing.nrows(), e.aliasing.ncols());
    let mut out = CMat::zeros(head + cols, cols);
    out.rows_mut(0, head).copy_from(&(-&e.aliasing));
    for (j, &d) in e.diag.iter().enumerate() {
        out[(head + j, j)] = Complex64::new(d.sqrt(), 0.0);
    }
    Ok(out)
}

/// The two parts of the squared error of `g = sum_{k>=m} a_k sigma_k eta_k`
/// (coefficients `a` for `k = m..=m_trunc`): `|g - P g|^2` in `L_2` and the
/// squared norm of the least-squares coefficients recovered from the samples
/// of `g`, computed by sampling `g` and solving.
pub fn error_split(
    basis: &SpectralBasis,
    nodes: &NodeSet,
    m: usize,
    m_trunc: usize,
    coefficients: &[Complex64],
) -> Result<(f64, f64)> {
    check_inputs(basis, nodes, m, m_trunc)?;
    let cols = m_trunc.min(basis.count());
    if coefficients.len() != cols + 1 - m {
        return Err(Error::LengthMismatch {
            expected: cols + 1 - m,
            got: coefficients.len(),
        });
    }
    let projection: f64 = coefficients
        .iter()
        .enumerate()
        .map(|(j, a)| basis.lambdas[m - 1 + j] * a.norm_sqr())
        .sum();
    let matrix = build_matrix(basis, nodes, m, true)?;
    let op = RecoveryOperator::new(&matrix)?;
    let mut row = vec![Complex64::new(0.0, 0.0); coefficients.len()];
    let samples: Vec<Complex64> = (0..nodes.len())
        .map(|i| {
            basis.eval_into(nodes.node(i), m - 1..cols, &mut row);
            row.iter()
                .zip(coefficients)
                .enumerate()
                .map(|(j, (e, a))| e * a * basis.sigmas[m - 1 + j])
                .sum()
        })
        .collect();
    let recovered = op.apply(&samples)?;
    Ok((projection, recovered.norm_squared()))
}
