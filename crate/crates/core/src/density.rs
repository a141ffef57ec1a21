//! Sampling density mixing the normalised Christoffel function with the
//! normalised spectral tail, and i.i.d. node generation from it.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::spectrum::{orthonormal_legendre, KernelModel, SpectralBasis, TailSum};

/// Grid size used to locate the supremum of the density for the rejection
/// envelope.
const ENVELOPE_GRID: usize = 10_000;
const ENVELOPE_INFLATION: f64 = 1.01;
const ROUNDOFF_CLAMP: f64 = -1e-14;

#[derive(Debug, Clone)]
pub struct SamplingDensity {
    basis: SpectralBasis,
    m: usize,
    trace: TailSum,
    tail: TailSum,
    envelope: f64,
}

impl SamplingDensity {
    /// Density of order `m >= 2`; `basis` must hold at least `m - 1`
    /// eigenpairs.
    pub fn new(basis: &SpectralBasis, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::range("m", m, ">= 2"));
        }
        if basis.count() < m - 1 {
            return Err(Error::range("m", m, format!("[2, {}]", basis.count() + 1)));
        }
        let trace = basis.model.trace();
        let tail = basis.tail_sum(m);
        let mut density = SamplingDensity {
            basis: basis.clone(),
            m,
            trace,
            tail,
            envelope: 1.0,
        };
        if !basis.model.is_torus() {
            let sup = (0..=ENVELOPE_GRID)
                .map(|i| density.eval(&[-1.0 + 2.0 * i as f64 / ENVELOPE_GRID as f64]))
                .fold(0.0, f64::max);
            density.envelope = sup * ENVELOPE_INFLATION;
        }
        Ok(density)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn trace(&self) -> TailSum {
        self.trace
    }

    /// `sum_{j>=m} sigma_j^2`, the normaliser of the tail half.
    pub fn tail_normalizer(&self) -> TailSum {
        self.tail
    }

    /// `rho_m(x)`. When the model has no tail beyond `m - 1` the Christoffel
    /// half carries the full mass so the density still integrates to one.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let m = self.m;
        let value = match &self.basis.model {
            // Both halves are identically 1/2 since |eta_j| = 1.
            KernelModel::TorusMixedSobolev { .. } => 1.0,
            KernelModel::LegendreSpectrum { sigma } => {
                let p = orthonormal_legendre(x[0], sigma.len().max(m - 1));
                let head: f64 = p[..m - 1].iter().map(|v| v * v).sum::<f64>() / (m - 1) as f64;
                if self.tail.value > 0.0 {
                    let tail: f64 = (m - 1..sigma.len())
                        .map(|i| sigma[i] * sigma[i] * p[i] * p[i])
                        .sum();
                    0.5 * (head + tail / self.tail.value)
                } else {
                    head
                }
            }
        };
        if (ROUNDOFF_CLAMP..0.0).contains(&value) {
            0.0
        } else {
            value
        }
    }

    /// Bound on `sup_x sum_{j>=m} |e_j(x)|^2 / rho_m(x)`, namely
    /// `2 sum_{j>=m} sigma_j^2`.
    pub fn transformed_tail_bound(&self) -> f64 {
        2.0 * self.tail.upper()
    }

    /// Envelope used by the rejection sampler (1 on the torus).
    pub fn envelope(&self) -> f64 {
        self.envelope
    }

    /// `n` i.i.d. nodes from `rho_m`, reproducible from `seed`.
    pub fn draw_nodes(&self, n: usize, seed: u64) -> Result<NodeSet> {
        self.draw_nodes_stream(n, seed, 0)
    }

    /// As [`draw_nodes`](Self::draw_nodes) on an independent stream, for
    /// parallel trials.
    pub fn draw_nodes_stream(&self, n: usize, seed: u64, stream: u64) -> Result<NodeSet> {
        if n == 0 {
            return Err(Error::range("n", 0, ">= 1"));
        }
        let dim = self.basis.dim();
        let mut rng = rng::stream(seed, stream);
        let mut coords = Vec::with_capacity(n * dim);
        let mut density = Vec::with_capacity(n);
        if self.basis.model.is_torus() {
            for _ in 0..n * dim {
                coords.push(rng.random::<f64>());
            }
            let rho = self.eval(&coords[..dim]);
            density.resize(n, rho);
        } else {
            while density.len() < n {
                let x = 2.0 * rng.random::<f64>() - 1.0;
                let rho = self.eval(&[x]);
                if rho > self.envelope {
                    return Err(Error::Consistency(format!(
                        "density {rho} at x = {x} exceeds the rejection envelope {}",
                        self.envelope
                    )));
                }
                if rng.random::<f64>() * self.envelope < rho {
                    coords.push(x);
                    density.push(rho);
                }
            }
        }
        Ok(NodeSet {
            dim,
            coords,
            density,
            seed,
            stream,
            m: self.m,
        })
    }

    /// Node set at given points (equispaced grids, synthetic tests).
    pub fn nodes_at(&self, dim: usize, coords: Vec<f64>) -> Result<NodeSet> {
        if dim != self.basis.dim() {
            return Err(Error::LengthMismatch {
                expected: self.basis.dim(),
                got: dim,
            });
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        let density = coords.chunks(dim).map(|x| self.eval(x)).collect();
        Ok(NodeSet {
            dim,
            coords,
            density,
            seed: 0,
            stream: 0,
            m: self.m,
        })
    }
}

/// Sampling nodes with their density values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    pub dim: usize,
    /// Row-major coordinates, `dim` per node.
    pub coords: Vec<f64>,
    pub density: Vec<f64>,
    pub seed: u64,
    pub stream: u64,
    pub m: usize,
}

impl NodeSet {
    /// Builds a node set from raw parts, checking the length invariants.
    pub fn from_parts(dim: usize, coords: Vec<f64>, density: Vec<f64>, m: usize) -> Result<Self> {
        if dim == 0 || coords.len() != density.len() * dim {
            return Err(Error::LengthMismatch {
                expected: density.len() * dim,
                got: coords.len(),
            });
        }
        if let Some(bad) = density.iter().find(|r| !(**r >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "negative density value {bad}"
            )));
        }
        Ok(NodeSet {
            dim,
            coords,
            density,
            seed: 0,
            stream: 0,
            m,
        })
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// The nodes at positions `keep`, in that order.
    pub fn select(&self, keep: &[usize]) -> NodeSet {
        let mut coords = Vec::with_capacity(keep.len() * self.dim);
        let mut density = Vec::with_capacity(keep.len());
        for &i in keep {
            coords.extend_from_slice(self.node(i));
            density.push(self.density[i]);
        }
        NodeSet {
            coords,
            density,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> NodeSet {
        NodeSet {
            dim: self.dim,
            coords: Vec::new(),
            density: Vec::new(),
            seed: self.seed,
            stream: self.stream,
            m: self.m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{composite, gauss_legendre};
    use crate::spectrum::enumerate_spectrum;

    fn geometric_model(len: usize) -> SpectralBasis {
        // sigma_k^2 = 4^{1-k}
        let sigma = (0..len).map(|k| 0.5f64.powi(k as i32)).collect();
        enumerate_spectrum(&KernelModel::legendre(sigma).unwrap(), len).unwrap()
    }

    fn torus_basis() -> SpectralBasis {
        enumerate_spectrum(&KernelModel::torus(1, 1.0).unwrap(), 64).unwrap()
    }

    /// `P_j(0)^2` for the classical Legendre polynomial.
    fn legendre_at_zero_sq(j: usize) -> f64 {
        if j % 2 == 1 {
            return 0.0;
        }
        let mut v = 1.0;
        for i in (1..=j).step_by(2) {
            v *= i as f64 / (i + 1) as f64;
        }
        v * v
    }

    #[test]
    fn torus_density_is_one() {
        let b = enumerate_spectrum(&KernelModel::torus(2, 1.0).unwrap(), 50).unwrap();
        let d = SamplingDensity::new(&b, 9).unwrap();
        let nodes = d.draw_nodes(100, 3).unwrap();
        for i in 0..100 {
            assert!((d.eval(nodes.node(i)) - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn legendre_density_at_zero_matches_closed_form() {
        let b = geometric_model(40);
        let d = SamplingDensity::new(&b, 2).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 2..=40usize {
            let s2 = 4f64.powi(1 - k as i32);
            num += s2 * (2.0 * (k - 1) as f64 + 1.0) * legendre_at_zero_sq(k - 1);
            den += s2;
        }
        let want = 0.5 * (1.0 + num / den);
        assert!((d.eval(&[0.0]) - want).abs() < 1e-14);
    }

    #[test]
    fn legendre_density_integrates_to_one() {
        let b = geometric_model(40);
        let (x, w) = gauss_legendre(200);
        for m in [2, 3, 7, 20] {
            let d = SamplingDensity::new(&b, m).unwrap();
            let total: f64 = x
                .iter()
                .zip(&w)
                .map(|(t, wi)| 0.5 * wi * d.eval(&[*t]))
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "m={m}: {total}");
        }
    }

    #[test]
    fn finite_rank_density_uses_christoffel_half() {
        let b = geometric_model(3);
        let d = SamplingDensity::new(&b, 4).unwrap();
        assert_eq!(d.tail_normalizer().value, 0.0);
        assert_eq!(d.transformed_tail_bound(), 0.0);
        assert!((d.eval(&[1.0]) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn transformed_tail_bounds() {
        let d = SamplingDensity::new(&geometric_model(60), 3).unwrap();
        assert!((d.transformed_tail_bound() - 1.0 / 6.0).abs() < 1e-15);

        let t = torus_basis();
        let d = SamplingDensity::new(&t, 2).unwrap();
        let mut want = 0.0;
        for k in (1..=2_000_000u64).rev() {
            want += 4.0 / (1.0 + (2.0 * std::f64::consts::PI * k as f64).powi(2));
        }
        // Remainder beyond 2e6 is about 4 / (4 pi^2 2e6).
        want += 4.0 / (4.0 * std::f64::consts::PI.powi(2) * 2e6);
        assert!((d.transformed_tail_bound() - want).abs() < 1e-12);
    }

    #[test]
    fn pointwise_bounds_at_random_points() {
        for b in [geometric_model(40), torus_basis()] {
            for m in [2, 5, 12] {
                let d = SamplingDensity::new(&b, m).unwrap();
                let tail_bound = d.transformed_tail_bound();
                let nodes = d.draw_nodes(10_000, 11).unwrap();
                // The torus tail is the same at every point; evaluate it once.
                let torus_tail = b.model.is_torus().then(|| b.tail_at(nodes.node(0), m));
                for i in 0..nodes.len() {
                    let x = nodes.node(i);
                    let rho = d.eval(x);
                    let tail = torus_tail.unwrap_or_else(|| b.tail_at(x, m));
                    assert!(b.christoffel_sum(x, m) / rho <= 2.0 * (m - 1) as f64 * (1.0 + 1e-12));
                    assert!(tail / rho <= tail_bound * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn draws_are_deterministic() {
        let d = SamplingDensity::new(&geometric_model(20), 4).unwrap();
        assert_eq!(d.draw_nodes(500, 9).unwrap(), d.draw_nodes(500, 9).unwrap());
        assert_ne!(
            d.draw_nodes(500, 9).unwrap(),
            d.draw_nodes(500, 10).unwrap()
        );
    }

    #[test]
    fn legendre_samples_follow_density() {
        let d = SamplingDensity::new(&geometric_model(30), 5).unwrap();
        let n = 100_000;
        let nodes = d.draw_nodes(n, 2024).unwrap();
        let mut xs = nodes.coords.clone();
        xs.sort_by(f64::total_cmp);
        // CDF on a fine grid by composite quadrature, then linear lookup.
        let grid = 4000;
        let mut cdf = vec![0.0; grid + 1];
        for i in 0..grid {
            let a = -1.0 + 2.0 * i as f64 / grid as f64;
            let b = a + 2.0 / grid as f64;
            let (t, w) = composite(a, b, 1, 12);
            let mass: f64 = t
                .iter()
                .zip(&w)
                .map(|(x, wi)| 0.5 * wi * d.eval(&[*x]))
                .sum();
            cdf[i + 1] = cdf[i] + mass;
        }
        let mut ks: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let pos = (x + 1.0) / 2.0 * grid as f64;
            let j = (pos.floor() as usize).min(grid - 1);
            let frac = pos - j as f64;
            let f = cdf[j] + frac * (cdf[j + 1] - cdf[j]);
            ks = ks.max((f - i as f64 / n as f64).abs());
            ks = ks.max((f - (i + 1) as f64 / n as f64).abs());
        }
        assert!(ks < 0.01, "KS distance {ks}");
    }

    #[test]
    fn select_keeps_order() {
        let d = SamplingDensity::new(&torus_basis(), 3).unwrap();
        let nodes = d.draw_nodes(10, 1).unwrap();
        let sub = nodes.select(&[7, 2]);
        assert_eq!(sub.node(0), nodes.node(7));
        assert_eq!(sub.node(1), nodes.node(2));
        assert_eq!(sub.len(), 2);
    }
}
