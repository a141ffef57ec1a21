//! Model kernels given by their spectral data.
//!
//! Two families are provided: the tensor-product Sobolev kernel of dominating
//! mixed smoothness on the torus `[0,1)^d`, whose eigenfunctions are the
//! complex exponentials, and an explicit spectrum on `[-1,1]` paired with the
//! Legendre polynomials normalised for the probability measure `dx/2`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelModel {
    /// `H^s_mix(T^d)` with weights `(1 + (2 pi |k|)^{2s})^{1/2}` per coordinate.
    TorusMixedSobolev { dim: usize, smoothness: f64 },
    /// Singular numbers `sigma` paired with orthonormal Legendre polynomials.
    /// The model has exactly `sigma.len()` non-zero singular numbers.
    LegendreSpectrum { sigma: Vec<f64> },
}

/// Index label of an eigenpair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Frequency(Vec<i64>),
    Degree(usize),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Frequency(k) => {
                let parts: Vec<String> = k.iter().map(|v| v.to_string()).collect();
                write!(f, "{}", parts.join(" "))
            }
            Label::Degree(n) => write!(f, "{n}"),
        }
    }
}

/// A truncated sum together with a bound on the neglected part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSum {
    pub value: f64,
    pub remainder: f64,
}

impl TailSum {
    pub fn exact(value: f64) -> Self {
        TailSum {
            value,
            remainder: 0.0,
        }
    }

    pub fn upper(&self) -> f64 {
        self.value + self.remainder
    }
}

impl KernelModel {
    pub fn torus(dim: usize, smoothness: f64) -> Result<Self> {
        let model = KernelModel::TorusMixedSobolev { dim, smoothness };
        model.validate()?;
        Ok(model)
    }

    pub fn legendre(sigma: Vec<f64>) -> Result<Self> {
        let model = KernelModel::LegendreSpectrum { sigma };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelModel::TorusMixedSobolev { dim, smoothness } => {
                if *dim == 0 {
                    return Err(Error::InvalidModel(
                        "torus dimension must be at least 1".into(),
                    ));
                }
                if !smoothness.is_finite() || *smoothness <= 0.5 {
                    return Err(Error::InvalidModel(format!(
                        "smoothness {smoothness} gives an infinite trace; need s > 1/2"
                    )));
                }
            }
            KernelModel::LegendreSpectrum { sigma } => {
                if sigma.is_empty() {
                    return Err(Error::InvalidModel("empty singular number sequence".into()));
                }
                if let Some(bad) = sigma.iter().find(|s| !s.is_finite() || **s <= 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "singular numbers must be positive and finite, found {bad}"
                    )));
                }
                if let Some(i) = sigma.windows(2).position(|w| w[1] > w[0]) {
                    return Err(Error::InvalidModel(format!(
                        "singular numbers must be non-increasing (index {})",
                        i + 2
                    )));
                }
            }
        }
        Ok(())
    }

    /// Spatial dimension of the domain.
    pub fn dim(&self) -> usize {
        match self {
            KernelModel::TorusMixedSobolev { dim, .. } => *dim,
            KernelModel::LegendreSpectrum { .. } => 1,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, KernelModel::TorusMixedSobolev { .. })
    }

    /// Number of non-zero singular numbers, `None` if infinite.
    pub fn rank(&self) -> Option<usize> {
        match self {
            KernelModel::TorusMixedSobolev { .. } => None,
            KernelModel::LegendreSpectrum { sigma } => Some(sigma.len()),
        }
    }

    /// `sum_k sigma_k^2`, i.e. the integral of `K(x,x)`.
    pub fn trace(&self) -> TailSum {
        match self {
            KernelModel::TorusMixedSobolev { dim, smoothness } => {
                let one = torus_1d_sum(*smoothness);
                let d = *dim as i32;
                let value = one.value.powi(d);
                let remainder = (one.value + one.remainder).powi(d) - value;
                TailSum { value, remainder }
            }
            KernelModel::LegendreSpectrum { sigma } => {
                TailSum::exact(sigma.iter().map(|s| s * s).sum())
            }
        }
    }

    /// Diagonal `K(x, x)` of the kernel. For the torus this is the trace.
    pub fn kernel_diagonal(&self, x: &[f64]) -> f64 {
        match self {
            KernelModel::TorusMixedSobolev { .. } => self.trace().value,
            KernelModel::LegendreSpectrum { .. } => self.legendre_tail_at(x[0], 1),
        }
    }

    /// Closed-form kernel `K(x, y)` where one is available: the torus with
    /// `s = 1` and every finite Legendre spectrum.
    pub fn kernel(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        match self {
            KernelModel::TorusMixedSobolev { smoothness, .. } => {
                if *smoothness != 1.0 {
                    return None;
                }
                // K^1(t) = cosh(t - 1/2) / (2 sinh(1/2)) for t in [0, 1].
                let denom = 2.0 * 0.5f64.sinh();
                Some(
                    x.iter()
                        .zip(y)
                        .map(|(a, b)| {
                            let t = (a - b).rem_euclid(1.0);
                            (t - 0.5).cosh() / denom
                        })
                        .product(),
                )
            }
            KernelModel::LegendreSpectrum { sigma } => {
                let deg = sigma.len();
                let px = orthonormal_legendre(x[0], deg);
                let py = orthonormal_legendre(y[0], deg);
                Some(
                    sigma
                        .iter()
                        .zip(px.iter().zip(&py))
                        .map(|(s, (a, b))| s * s * a * b)
                        .sum(),
                )
            }
        }
    }

    /// `sum_{k >= m} sigma_k^2 |eta_k(x)|^2` for the Legendre model.
    fn legendre_tail_at(&self, x: f64, m: usize) -> f64 {
        let KernelModel::LegendreSpectrum { sigma } = self else {
            unreachable!("Legendre tail requested for torus model");
        };
        if m > sigma.len() {
            return 0.0;
        }
        let p = orthonormal_legendre(x, sigma.len());
        (m - 1..sigma.len())
            .map(|i| sigma[i] * sigma[i] * p[i] * p[i])
            .sum()
    }

    /// Squared eigenvalue `lambda_k = prod_j (1 + (2 pi |k_j|)^{2s})^{-1}`
    /// of a torus frequency. Coordinates are sorted first so the floating
    /// point result does not depend on their order.
    pub fn torus_lambda(smoothness: f64, freq: &[i64]) -> f64 {
        let mut abs: Vec<u64> = freq.iter().map(|k| k.unsigned_abs()).collect();
        abs.sort_unstable();
        abs.iter().map(|&k| torus_factor(smoothness, k)).product()
    }
}

fn torus_factor(smoothness: f64, k: u64) -> f64 {
    if k == 0 {
        1.0
    } else {
        1.0 / (1.0 + (2.0 * PI * k as f64).powf(2.0 * smoothness))
    }
}

/// `int_X^inf dt / (1 + (2 pi t)^{2s})` for `2 pi X > 1`, by the alternating
/// expansion in `(2 pi t)^{-2s}`.
fn torus_tail_integral(smoothness: f64, x: f64) -> f64 {
    let p = 2.0 * smoothness;
    let u = 2.0 * PI * x;
    debug_assert!(u > 1.0);
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..200 {
        let pj = p * j as f64;
        let term = u.powf(1.0 - pj) / (pj - 1.0);
        sum += sign * term;
        if term <= 1e-18 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    sum / (2.0 * PI)
}

/// `sum_{k > K} f(k)` for the convex decreasing one-dimensional factor `f`,
/// bracketed by `[int_K f - f(K)/2, int_{K+1/2} f]`.
fn torus_1d_tail_beyond(smoothness: f64, cutoff: u64) -> TailSum {
    let k = cutoff as f64;
    let lo = torus_tail_integral(smoothness, k) - 0.5 * torus_factor(smoothness, cutoff);
    let hi = torus_tail_integral(smoothness, k + 0.5);
    TailSum {
        value: 0.5 * (lo + hi),
        remainder: 0.5 * (hi - lo).abs(),
    }
}

/// `sum_{k > start} (1 + (2 pi k)^{2s})^{-1}`: a direct sum up to a cutoff
/// plus the bracketed remainder, with the cutoff grown until the bracket is
/// negligible.
fn torus_1d_sum_beyond(smoothness: f64, start: u64) -> TailSum {
    let mut cutoff: u64 = start.max(64) * 4;
    loop {
        let head: f64 = ((start + 1)..=cutoff)
            .rev()
            .map(|k| torus_factor(smoothness, k))
            .sum();
        let tail = torus_1d_tail_beyond(smoothness, cutoff);
        let value = head + tail.value;
        if tail.remainder <= 1e-15 * value || cutoff >= 1 << 24 {
            return TailSum {
                value,
                remainder: tail.remainder,
            };
        }
        cutoff *= 4;
    }
}

/// `sum_{k in Z} (1 + (2 pi |k|)^{2s})^{-1}`.
fn torus_1d_sum(smoothness: f64) -> TailSum {
    let beyond = torus_1d_sum_beyond(smoothness, 0);
    TailSum {
        value: 1.0 + 2.0 * beyond.value,
        remainder: 2.0 * beyond.remainder,
    }
}

/// Orthonormal Legendre polynomials `sqrt(2k+1) P_k(x)`, `k < count`, with
/// respect to `dx/2` on `[-1, 1]`.
pub fn orthonormal_legendre(x: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 0..count {
        let pk = match k {
            0 => 1.0,
            1 => x,
            _ => {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        out.push((2.0 * k as f64 + 1.0).sqrt() * pk);
    }
    out
}

/// Ordered eigensystem `(sigma_k, eta_k)` of a model, `k = 1..=count`.
///
/// Indices in the API are zero-based: position `i` holds `sigma_{i+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    pub model: KernelModel,
    pub lambdas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub labels: Vec<Label>,
}

#[derive(PartialEq)]
struct Candidate {
    lambda: f64,
    sup_norm: u64,
    freq: Vec<i64>,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Max-heap priority: larger lambda, then smaller sup norm, then
    // lexicographically smaller frequency.
    fn cmp(&self, other: &Self) -> Ordering {
        self.lambda
            .total_cmp(&other.lambda)
            .then_with(|| other.sup_norm.cmp(&self.sup_norm))
            .then_with(|| other.freq.cmp(&self.freq))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `count` largest eigenvalues of `model` in non-increasing order.
///
/// On the torus the frequencies are found by best-first search from `k = 0`:
/// moving one coordinate away from zero strictly decreases the eigenvalue, so
/// every frequency with eigenvalue at least the last one returned has been
/// visited. Ties are ordered by `max_j |k_j|`, then lexicographically.
/// A Legendre spectrum shorter than `count` is returned in full.
pub fn enumerate_spectrum(model: &KernelModel, count: usize) -> Result<SpectralBasis> {
    model.validate()?;
    if count == 0 {
        return Err(Error::range("count", 0, ">= 1"));
    }
    let (lambdas, labels) = match model {
        KernelModel::TorusMixedSobolev { dim, smoothness } => {
            enumerate_torus(*dim, *smoothness, count)
        }
        KernelModel::LegendreSpectrum { sigma } => {
            let take = count.min(sigma.len());
            (
                sigma[..take].iter().map(|s| s * s).collect(),
                (0..take).map(Label::Degree).collect(),
            )
        }
    };
    let sigmas = match model {
        KernelModel::LegendreSpectrum { sigma } => sigma[..lambdas.len()].to_vec(),
        _ => lambdas.iter().map(|l: &f64| l.sqrt()).collect(),
    };
    Ok(SpectralBasis {
        model: model.clone(),
        lambdas,
        sigmas,
        labels,
    })
}

fn enumerate_torus(dim: usize, smoothness: f64, count: usize) -> (Vec<f64>, Vec<Label>) {
    let mut heap = BinaryHeap::new();
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let origin = vec![0i64; dim];
    seen.insert(origin.clone());
    heap.push(Candidate {
        lambda: 1.0,
        sup_norm: 0,
        freq: origin,
    });
    let mut lambdas = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    while lambdas.len() < count {
        let top = heap.pop().expect("frequency lattice is infinite");
        for j in 0..dim {
            let kj = top.freq[j];
            let steps: &[i64] = if kj == 0 {
                &[1, -1]
            } else if kj > 0 {
                &[1]
            } else {
                &[-1]
            };
            for &step in steps {
                let mut next = top.freq.clone();
                next[j] += step;
                if seen.insert(next.clone()) {
                    heap.push(Candidate {
                        lambda: KernelModel::torus_lambda(smoothness, &next),
                        sup_norm: next.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0),
                        freq: next,
                    });
                }
            }
        }
        lambdas.push(top.lambda);
        labels.push(Label::Frequency(top.freq));
    }
    (lambdas, labels)
}

impl SpectralBasis {
    pub fn count(&self) -> usize {
        self.sigmas.len()
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// `sigma_k` for one-based `k`, zero beyond a finite model's rank.
    /// Panics if `k` lies beyond the enumerated part of an infinite model.
    pub fn sigma(&self, k: usize) -> f64 {
        assert!(k >= 1);
        match self.sigmas.get(k - 1) {
            Some(&s) => s,
            None => match self.model.rank() {
                Some(r) if k > r => 0.0,
                _ => panic!(
                    "sigma_{k} lies beyond the {} enumerated eigenpairs",
                    self.count()
                ),
            },
        }
    }

    /// `lambda_k = sigma_k^2` for one-based `k`, with the same conventions
    /// as [`sigma`](Self::sigma).
    pub fn lambda(&self, k: usize) -> f64 {
        match self.lambdas.get(k.saturating_sub(1)) {
            Some(&l) if k >= 1 => l,
            _ => self.sigma(k).powi(2),
        }
    }

    /// Evaluates `eta_{i+1}(x)` for the zero-based index range `range`
    /// into `out`.
    pub fn eval_into(&self, x: &[f64], range: std::ops::Range<usize>, out: &mut [Complex64]) {
        debug_assert_eq!(out.len(), range.len());
        match &self.model {
            KernelModel::TorusMixedSobolev { .. } => {
                for (slot, i) in out.iter_mut().zip(range) {
                    let Label::Frequency(k) = &self.labels[i] else {
                        unreachable!()
                    };
                    let mut t = 0.0;
                    for (kj, xj) in k.iter().zip(x) {
                        t += (*kj as f64) * xj;
                    }
                    let t = t - t.round();
                    let (s, c) = (2.0 * PI * t).sin_cos();
                    *slot = Complex64::new(c, s);
                }
            }
            KernelModel::LegendreSpectrum { .. } => {
                let p = orthonormal_legendre(x[0], range.end);
                for (slot, i) in out.iter_mut().zip(range) {
                    *slot = Complex64::new(p[i], 0.0);
                }
            }
        }
    }

    /// `eta_{index+1}(x)`.
    pub fn eval(&self, index: usize, x: &[f64]) -> Complex64 {
        let mut out = [Complex64::new(0.0, 0.0)];
        self.eval_into(x, index..index + 1, &mut out);
        out[0]
    }

    /// Right singular vector `e_{index+1}(x) = sigma_{index+1} eta_{index+1}(x)`.
    pub fn eval_e(&self, index: usize, x: &[f64]) -> Complex64 {
        self.eval(index, x) * self.sigmas[index]
    }

    fn check_order(&self, m: usize, max: usize) -> Result<()> {
        if m < 2 || m > max {
            return Err(Error::range("m", m, format!("[2, {max}]")));
        }
        Ok(())
    }

    /// `sum_{k<m} |eta_k(x)|^2`.
    pub fn christoffel_sum(&self, x: &[f64], m: usize) -> f64 {
        match &self.model {
            KernelModel::TorusMixedSobolev { .. } => (m - 1) as f64,
            KernelModel::LegendreSpectrum { .. } => orthonormal_legendre(x[0], m - 1)
                .iter()
                .map(|p| p * p)
                .sum(),
        }
    }

    /// `sum_{k>=m} sigma_k^2 |eta_k(x)|^2`, evaluated as a sum over the tail
    /// rather than as `K(x,x)` minus the head.
    pub fn tail_at(&self, x: &[f64], m: usize) -> f64 {
        match &self.model {
            KernelModel::TorusMixedSobolev { .. } => self.tail_sum(m).value,
            KernelModel::LegendreSpectrum { .. } => self.model.legendre_tail_at(x[0], m),
        }
    }

    /// `sum_{k >= m} sigma_k^2`. Needs the first `m - 1` eigenvalues.
    pub fn tail_sum(&self, m: usize) -> TailSum {
        assert!(m >= 1);
        match &self.model {
            KernelModel::LegendreSpectrum { sigma } => {
                TailSum::exact(sigma.iter().skip(m - 1).map(|s| s * s).sum())
            }
            KernelModel::TorusMixedSobolev { dim, smoothness } => {
                assert!(
                    m - 1 <= self.count(),
                    "tail from {m} needs {} eigenvalues, have {}",
                    m - 1,
                    self.count()
                );
                if *dim == 1 {
                    self.torus_1d_tail(*smoothness, m)
                } else {
                    let trace = self.model.trace();
                    let head: f64 = self.lambdas[..m - 1].iter().rev().sum();
                    TailSum {
                        value: (trace.value - head).max(0.0),
                        remainder: trace.remainder + 1e-16 * trace.value * m as f64,
                    }
                }
            }
        }
    }

    /// One-dimensional tail summed directly: the ordering is `0, -1, 1, -2,
    /// 2, ...`, so the tail from `m` is possibly one of `+-K` plus everything
    /// with `|k| > K`.
    fn torus_1d_tail(&self, smoothness: f64, m: usize) -> TailSum {
        // Position m (one-based) holds -m/2 for even m, +(m-1)/2 for odd m.
        let kmag = (m / 2) as u64;
        let (single, kmag) = if m % 2 == 0 {
            (0.0, kmag - 1)
        } else {
            (torus_factor(smoothness, kmag), kmag)
        };
        let beyond = torus_1d_sum_beyond(smoothness, kmag);
        TailSum {
            value: single + 2.0 * beyond.value,
            remainder: 2.0 * beyond.remainder,
        }
    }

    /// `N(m) = sup_x sum_{k<m} |eta_k(x)|^2`. The Legendre supremum is at
    /// `x = 1`, where `|eta_k(1)|^2 = 2k - 1`.
    pub fn spectral_function_n(&self, m: usize) -> Result<f64> {
        self.check_order(m, self.count() + 1)?;
        Ok(match &self.model {
            KernelModel::TorusMixedSobolev { .. } => (m - 1) as f64,
            KernelModel::LegendreSpectrum { .. } => ((m - 1) * (m - 1)) as f64,
        })
    }

    /// `T(m) = sup_x sum_{k>=m} |e_k(x)|^2`, with the bound on the neglected
    /// analytic remainder. Finite models return 0 beyond their rank.
    pub fn spectral_function_t(&self, m: usize) -> Result<TailSum> {
        let max = match self.model.rank() {
            Some(_) => usize::MAX,
            None => self.count() + 1,
        };
        self.check_order(m, max)?;
        match &self.model {
            KernelModel::TorusMixedSobolev { .. } => {
                let t = self.tail_sum(m);
                if !t.value.is_finite() || t.remainder > 1e-8 * t.value.max(f64::MIN_POSITIVE) {
                    return Err(Error::Truncation(format!(
                        "tail from {m}: value {} with remainder {}",
                        t.value, t.remainder
                    )));
                }
                Ok(t)
            }
            KernelModel::LegendreSpectrum { .. } => {
                Ok(TailSum::exact(self.model.legendre_tail_at(1.0, m)))
            }
        }
    }
}
