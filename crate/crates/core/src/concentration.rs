//! Frame certification for random nodes: the oversampling condition, the
//! smallest admissible node count, extremal eigenvalues of the normalised
//! Gram matrix, and the deviation of the weighted tail block.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{NodeSet, SamplingDensity};
use crate::error::{Error, Result};
use crate::leastsq::{fill_row_range, FrameMatrix};
use crate::linalg::{self, CMat};
use crate::spectrum::SpectralBasis;

/// Golden ratio, the constant in the tail deviation threshold.
pub const KAPPA: f64 = 1.618_033_988_749_895;

/// Rows per chunk when accumulating Gram matrices without materialising
/// the full evaluation matrix.
pub(crate) const GRAM_CHUNK: usize = 2048;

/// `spectral_n <= n / (10 r ln n)`.
pub fn check_condition(m: usize, n: usize, r: f64, spectral_n: f64) -> Result<bool> {
    if m < 2 || n < m {
        return Err(Error::range("n", n, format!(">= m = {m} >= 2")));
    }
    if !(r > 1.0) {
        return Err(Error::range("r", r, "> 1"));
    }
    let nf = n as f64;
    Ok(spectral_n <= nf / (10.0 * r * nf.ln()))
}

/// Smallest `n >= 3` with `m <= n / (factor ln n)`.
///
/// `n / ln n` is increasing for `n >= 3`, and the solution exceeds
/// `factor m ln(factor m)`, so the scan starts there.
pub fn smallest_n(m: usize, factor: f64) -> Result<usize> {
    if m < 2 {
        return Err(Error::range("m", m, ">= 2"));
    }
    if !(factor > 0.0) {
        return Err(Error::range("factor", factor, "> 0"));
    }
    let fm = factor * m as f64;
    let start = if fm > std::f64::consts::E {
        (fm * fm.ln()).floor() as usize
    } else {
        3
    };
    let mut n = start.max(3);
    while (m as f64) > n as f64 / (factor * (n as f64).ln()) {
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameCertificate {
    pub m: usize,
    pub n: usize,
    pub r: f64,
    pub eigen_min: f64,
    pub eigen_max: f64,
    /// All eigenvalues of `(1/n) L^* L` lie in `(1/2, 3/2)`.
    pub passed: bool,
    /// The oversampling condition `N(m) <= n / (10 r ln n)`.
    pub condition_ok: bool,
}

fn certificate(m: usize, n: usize, r: f64, spectral_n: f64, gram: &CMat) -> FrameCertificate {
    let (lo, hi) = linalg::extremal_eigenvalues(gram);
    let nf = n as f64;
    let eigen_min = (lo / nf).max(0.0);
    let eigen_max = hi / nf;
    FrameCertificate {
        m,
        n,
        r,
        eigen_min,
        eigen_max,
        passed: eigen_min > 0.5 && eigen_max < 1.5,
        condition_ok: n >= 2 && spectral_n <= nf / (10.0 * r * nf.ln()),
    }
}

/// Certificate for an explicit matrix. `spectral_n` is `N(m)` of the basis
/// the matrix was built from.
pub fn certify_frame(matrix: &FrameMatrix, r: f64, spectral_n: f64) -> FrameCertificate {
    let gram = linalg::gram(&matrix.entries);
    certificate(matrix.cols() + 1, matrix.rows(), r, spectral_n, &gram)
}

/// `L^* L` for the basis indices `range`, accumulated over row chunks.
/// Chunks are processed in parallel and summed in order, so the result does
/// not depend on the thread count.
pub fn streamed_gram(
    basis: &SpectralBasis,
    nodes: &NodeSet,
    range: std::ops::Range<usize>,
    weighted: bool,
) -> CMat {
    let k = range.len();
    let n = nodes.len();
    let starts: Vec<usize> = (0..n).step_by(GRAM_CHUNK).collect();
    let parts: Vec<CMat> = starts
        .par_iter()
        .map(|&start| {
            let block = row_block(
                basis,
                nodes,
                start..(start + GRAM_CHUNK).min(n),
                range.clone(),
                weighted,
            );
            linalg::adjoint_mul(&block, &block)
        })
        .collect();
    let mut gram = CMat::zeros(k, k);
    for part in parts {
        gram += part;
    }
    linalg::hermitize(&mut gram);
    gram
}

/// Rows `rows` of the (weighted) evaluation matrix for basis indices `range`.
pub(crate) fn row_block(
    basis: &SpectralBasis,
    nodes: &NodeSet,
    rows: std::ops::Range<usize>,
    range: std::ops::Range<usize>,
    weighted: bool,
) -> CMat {
    let k = range.len();
    let mut block = CMat::zeros(rows.len(), k);
    let mut row = vec![num_complex::Complex64::new(0.0, 0.0); k];
    for (r, i) in rows.enumerate() {
        fill_row_range(basis, nodes, i, range.clone(), weighted, &mut row);
        for (j, v) in row.iter().enumerate() {
            block[(r, j)] = *v;
        }
    }
    block
}

/// Certificate for the weighted matrix of `nodes`, computed without forming
/// the full `n x (m-1)` matrix.
pub fn certify_nodes(
    basis: &SpectralBasis,
    nodes: &NodeSet,
    m: usize,
    r: f64,
) -> Result<FrameCertificate> {
    if m < 2 || basis.count() < m - 1 {
        return Err(Error::range("m", m, format!("[2, {}]", basis.count() + 1)));
    }
    let gram = streamed_gram(basis, nodes, 0..m - 1, true);
    Ok(certificate(
        m,
        nodes.len(),
        r,
        basis.spectral_function_n(m)?,
        &gram,
    ))
}

/// Certificates for `trials` independent node draws, trial `t` on stream
/// `t` of `seed`. Runs on the current rayon pool.
pub fn monte_carlo_certify(
    density: &SamplingDensity,
    n: usize,
    r: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<FrameCertificate>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let nodes = density.draw_nodes_stream(n, seed, t as u64)?;
            certify_nodes(density.basis(), &nodes, density.m(), r)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailDeviationReport {
    pub m: usize,
    pub n: usize,
    pub m_trunc: usize,
    /// `||(1/n) Y^* Y - diag(sigma_m^2..sigma_M^2)||` on the retained block.
    pub deviation: f64,
    /// Bound on how far the untruncated deviation can differ from
    /// `deviation`.
    pub truncation_uncertainty: f64,
    pub bound_f: f64,
    /// `||Lambda|| = sigma_m^2`.
    pub lambda_norm: f64,
    /// `M^2 = 2 sum_{j>=m} sigma_j^2`.
    pub m_squared: f64,
    pub kappa: f64,
}

impl TailDeviationReport {
    /// Whether the deviation provably stays below `F`.
    pub fn below_threshold(&self) -> bool {
        self.deviation + self.truncation_uncertainty < self.bound_f
    }
}

/// Deviation of the weighted tail Gram block from the diagonal of squared
/// singular numbers, on indices `m..=m_trunc`.
///
/// Rows are `y^i = (e_m(x^i), ..., e_M(x^i)) / sqrt(rho_m(x^i))`. The
/// neglected columns `Y_2` enter through `||Y_1|| ||Y_2||_F / n` and
/// `max(||Y_2||_F^2 / n, sigma_{M+1}^2)`, where `||Y_2||_F^2` is the sum over
/// nodes of the pointwise tail beyond `M` divided by the density.
pub fn tail_deviation(
    density: &SamplingDensity,
    nodes: &NodeSet,
    m_trunc: usize,
    r: f64,
) -> Result<TailDeviationReport> {
    let basis = density.basis();
    let m = density.m();
    let n = nodes.len();
    if m_trunc < m {
        return Err(Error::Truncation(format!(
            "truncation level {m_trunc} is below m = {m}"
        )));
    }
    let rank = basis.model.rank();
    let last = match rank {
        Some(r) => m_trunc.min(r),
        None => m_trunc,
    };
    if rank.is_none() && basis.count() < m_trunc + 1 {
        return Err(Error::Truncation(format!(
            "basis holds {} eigenpairs, truncation at {m_trunc} needs {}",
            basis.count(),
            m_trunc + 1
        )));
    }
    let nf = n as f64;
    let m_squared = density.transformed_tail_bound();
    let lambda_norm = basis.lambda(m);
    let bound_f = (8.0 * r * nf.ln() / nf * m_squared * KAPPA * KAPPA).max(lambda_norm);

    let (deviation, y1_norm) = if last >= m {
        let mut gram = streamed_gram(basis, nodes, m - 1..last, true);
        for (j, k) in (m - 1..last).enumerate() {
            let s = basis.sigmas[k];
            for i in 0..gram.nrows() {
                gram[(i, j)] *= s;
                gram[(j, i)] *= s;
            }
        }
        let y1_sq = linalg::extremal_eigenvalues(&gram).1.max(0.0);
        gram /= num_complex::Complex64::new(nf, 0.0);
        for (j, k) in (m - 1..last).enumerate() {
            gram[(j, j)] -= basis.lambdas[k];
        }
        (linalg::hermitian_spectral_norm(&gram), y1_sq.sqrt())
    } else {
        (0.0, 0.0)
    };

    let truncation_uncertainty = match rank {
        Some(r) if last >= r => 0.0,
        _ => {
            let beyond = last + 1;
            let torus_tail = basis
                .model
                .is_torus()
                .then(|| basis.tail_sum(beyond).upper());
            let y2_fro_sq: f64 = (0..n)
                .map(|i| {
                    let rho = nodes.density[i];
                    if rho == 0.0 {
                        0.0
                    } else {
                        torus_tail.unwrap_or_else(|| basis.tail_at(nodes.node(i), beyond)) / rho
                    }
                })
                .sum();
            let next = basis.lambda(beyond);
            y1_norm * y2_fro_sq.sqrt() / nf + (y2_fro_sq / nf).max(next)
        }
    };

    Ok(TailDeviationReport {
        m,
        n,
        m_trunc,
        deviation,
        truncation_uncertainty,
        bound_f,
        lambda_norm,
        m_squared,
        kappa: KAPPA,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leastsq::build_matrix;
    use crate::spectrum::{enumerate_spectrum, KernelModel};

    #[test]
    fn condition_examples() {
        assert!(check_condition(2, 497, 2.0, 1.0).unwrap());
        assert!(!check_condition(10, 100, 2.0, 10.0).unwrap());
        let mut n = 100;
        while !check_condition(10, n, 2.0, 9.0).unwrap() {
            n *= 2;
        }
        assert!(n < 1 << 20);
        assert!(check_condition(2, 100, 1.0, 1.0).is_err());
    }

    #[test]
    fn smallest_n_values() {
        assert_eq!(smallest_n(2, 40.0).unwrap(), 497);
        assert_eq!(smallest_n(3, 40.0).unwrap(), 803);
        let mut prev = 0;
        for m in 2..=50 {
            let n = smallest_n(m, 40.0).unwrap();
            let ok = |n: usize| m as f64 <= n as f64 / (40.0 * (n as f64).ln());
            assert!(ok(n) && !ok(n - 1));
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn equispaced_torus_frame_is_exact_identity() {
        let b = enumerate_spectrum(&KernelModel::torus(1, 1.0).unwrap(), 5).unwrap();
        let d = SamplingDensity::new(&b, 6).unwrap();
        let nodes = d
            .nodes_at(1, (0..16).map(|j| j as f64 / 16.0).collect())
            .unwrap();
        let l = build_matrix(&b, &nodes, 6, true).unwrap();
        let cert = certify_frame(&l, 2.0, 5.0);
        assert!((cert.eigen_min - 1.0).abs() < 1e-12);
        assert!((cert.eigen_max - 1.0).abs() < 1e-12);
        assert!(cert.passed);
        let streamed = certify_nodes(&b, &nodes, 6, 2.0).unwrap();
        assert!((streamed.eigen_min - cert.eigen_min).abs() < 1e-13);
    }

    #[test]
    fn repeated_node_fails() {
        let b = enumerate_spectrum(&KernelModel::torus(1, 1.0).unwrap(), 3).unwrap();
        let nodes = NodeSet::from_parts(1, vec![0.3, 0.3, 0.6], vec![1.0; 3], 4).unwrap();
        let cert = certify_nodes(&b, &nodes, 4, 2.0).unwrap();
        assert!(cert.eigen_min.abs() < 1e-12);
        assert!(!cert.passed);
    }

    #[test]
    fn streamed_gram_matches_dense() {
        let sigma = (0..30).map(|k| 0.8f64.powi(k)).collect();
        let b = enumerate_spectrum(&KernelModel::legendre(sigma).unwrap(), 30).unwrap();
        let d = SamplingDensity::new(&b, 8).unwrap();
        let nodes = d.draw_nodes(5000, 1).unwrap();
        let dense = linalg::gram(&build_matrix(&b, &nodes, 8, true).unwrap().entries);
        let streamed = streamed_gram(&b, &nodes, 0..7, true);
        assert!((dense - streamed).norm() < 1e-9);
    }

    #[test]
    fn zero_tail_has_zero_deviation() {
        let b =
            enumerate_spectrum(&KernelModel::legendre(vec![1.0, 0.5, 0.25]).unwrap(), 3).unwrap();
        let d = SamplingDensity::new(&b, 4).unwrap();
        let nodes = d.draw_nodes(50, 2).unwrap();
        let rep = tail_deviation(&d, &nodes, 10, 2.0).unwrap();
        assert_eq!(rep.deviation, 0.0);
        assert_eq!(rep.truncation_uncertainty, 0.0);
        assert_eq!(rep.lambda_norm, 0.0);
    }

    #[test]
    fn tail_deviation_reports_lambda_norm() {
        let b = enumerate_spectrum(&KernelModel::torus(1, 1.0).unwrap(), 80).unwrap();
        let d = SamplingDensity::new(&b, 4).unwrap();
        let nodes = d.draw_nodes(1000, 5).unwrap();
        let rep = tail_deviation(&d, &nodes, 64, 2.0).unwrap();
        assert_eq!(rep.lambda_norm, b.lambdas[3]);
        assert!(rep.bound_f >= rep.lambda_norm);
        assert!(rep.truncation_uncertainty > 0.0 && rep.truncation_uncertainty < 1e-2);
        assert!(tail_deviation(&d, &nodes, 3, 2.0).is_err());
        assert!(tail_deviation(&d, &nodes, 200, 2.0).is_err());
    }
}
