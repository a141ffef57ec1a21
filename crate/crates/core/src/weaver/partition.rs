use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::constants::ZETA;
use super::frame::{add_outer, FiniteFrame, CERTIFY_TOLERANCE};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::rng;

/// Largest frame searched exhaustively (`2^{n-1}` partitions).
pub const BRUTE_FORCE_LIMIT: usize = 24;

const LOCAL_SEARCH_RESTARTS: usize = 50;
const LOCAL_SEARCH_BATCH: usize = 8;
const LOCAL_SEARCH_PAIRS: usize = 64;
const LOCAL_SEARCH_STALLS: usize = 30;
const LOCAL_SEARCH_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionBounds {
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Required lower frame bound of each class.
    pub lower: f64,
    /// Required upper frame bound of each class.
    pub upper: f64,
}

impl PartitionBounds {
    /// Two-class bounds for a frame with norm bound `eps` and frame bounds
    /// `[alpha, beta]`: `(1 -+ zeta sqrt(eps/alpha))/2` times `alpha`/`beta`.
    pub fn corollary(eps: f64, alpha: f64, beta: f64) -> Self {
        let s = ZETA * (eps / alpha).sqrt();
        PartitionBounds {
            eps,
            alpha,
            beta,
            lower: (1.0 - s) / 2.0 * alpha,
            upper: (1.0 + s) / 2.0 * beta,
        }
    }

    /// Bounds for `frame` itself. For a tight frame the upper bound is the
    /// sharper `(1 + sqrt(2 eps/alpha))^2 / 2 * beta`.
    pub fn for_frame(frame: &FiniteFrame) -> Self {
        let (alpha, beta) = frame.frame_bounds();
        let mut b = Self::corollary(frame.norm_bound(), alpha, beta);
        if beta - alpha <= 1e-12 * beta {
            let tight = (1.0 + (2.0 * b.eps / alpha).sqrt()).powi(2) / 2.0 * beta;
            b.upper = b.upper.min(tight);
        }
        b
    }

    /// True when `eps/alpha >= zeta^{-2}`, where every partition qualifies.
    pub fn is_vacuous(&self) -> bool {
        self.eps / self.alpha >= ZETA.powi(-2)
    }

    /// Largest amount by which either class misses the window; `<= 0` means
    /// feasible.
    pub fn violation(&self, first: (f64, f64), second: (f64, f64)) -> f64 {
        let one = |(lo, hi): (f64, f64)| (hi - self.upper).max(self.lower - lo);
        one(first).max(one(second))
    }

    fn slack(&self) -> f64 {
        CERTIFY_TOLERANCE * self.beta.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionEngine {
    BruteForce,
    LocalSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Class containing index 0, ascending.
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub first_bounds: (f64, f64),
    pub second_bounds: (f64, f64),
    pub bounds: PartitionBounds,
    /// Both classes meet `bounds`, from a fresh eigen-solve.
    pub feasible: bool,
    pub engine: PartitionEngine,
}

impl Partition {
    fn assemble(
        frame: &FiniteFrame,
        mut first: Vec<usize>,
        mut second: Vec<usize>,
        bounds: PartitionBounds,
        engine: PartitionEngine,
    ) -> Self {
        first.sort_unstable();
        second.sort_unstable();
        if second.first() == Some(&0) {
            std::mem::swap(&mut first, &mut second);
        }
        let first_bounds = frame.bounds_of(&first);
        let second_bounds = frame.bounds_of(&second);
        let feasible = bounds.violation(first_bounds, second_bounds) <= bounds.slack();
        Partition {
            first,
            second,
            first_bounds,
            second_bounds,
            bounds,
            feasible,
            engine,
        }
    }

    pub fn worse_lambda_max(&self) -> f64 {
        self.first_bounds.1.max(self.second_bounds.1)
    }

    /// The smaller class; on equal sizes the one containing index 0.
    pub fn smaller_class(&self) -> &[usize] {
        if self.second.len() < self.first.len() {
            &self.second
        } else {
            &self.first
        }
    }

    pub fn smaller_class_bounds(&self) -> (f64, f64) {
        if self.second.len() < self.first.len() {
            self.second_bounds
        } else {
            self.first_bounds
        }
    }
}

fn extremes(g: &CMat) -> (f64, f64) {
    match g.nrows() {
        1 => (g[(0, 0)].re, g[(0, 0)].re),
        2 => {
            let a = g[(0, 0)].re;
            let d = g[(1, 1)].re;
            let b = g[(0, 1)].norm_sqr();
            let mid = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b).sqrt();
            (mid - rad, mid + rad)
        }
        _ => linalg::extremal_eigenvalues(g),
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    /// Bit `i` set means element `i + 1` is in the first class.
    mask: u32,
    feasible: bool,
    /// Worse `lambda_max` when feasible, violation otherwise.
    key: f64,
}

/// Lexicographic order of the sorted index lists `{0} + bits(mask)`.
fn lex_cmp(a: u32, b: u32) -> Ordering {
    let x = a ^ b;
    if x == 0 {
        return Ordering::Equal;
    }
    let j = x.trailing_zeros();
    let a_has = a & (1 << j) != 0;
    let other = if a_has { b } else { a };
    let other_continues = (other >> j) >> 1 != 0;
    // The set holding element j+1 is smaller unless the other one stops here.
    match (a_has, other_continues) {
        (true, true) | (false, false) => Ordering::Less,
        _ => Ordering::Greater,
    }
}

fn better(a: Candidate, b: Candidate, tie: f64) -> Candidate {
    if a.feasible != b.feasible {
        return if a.feasible { a } else { b };
    }
    if (a.key - b.key).abs() > tie {
        return if a.key < b.key { a } else { b };
    }
    if lex_cmp(a.mask, b.mask) != Ordering::Greater {
        a
    } else {
        b
    }
}

/// Exhaustive two-class partition against [`PartitionBounds::for_frame`].
pub fn brute_force_partition(frame: &FiniteFrame) -> Result<Partition> {
    brute_force_partition_with(frame, PartitionBounds::for_frame(frame))
}

/// Exhaustive search over all partitions with index 0 in the first class.
///
/// Among feasible partitions the one with the smallest worse `lambda_max`
/// wins, ties going to the lexicographically smallest first class. When no
/// partition is feasible the least violating one is returned with
/// `feasible == false`.
pub fn brute_force_partition_with(
    frame: &FiniteFrame,
    bounds: PartitionBounds,
) -> Result<Partition> {
    let n = frame.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::Budget(format!(
            "exhaustive partition search is limited to n <= {BRUTE_FORCE_LIMIT} (got {n}); \
             use recursive halving or the greedy subsampler"
        )));
    }
    let m = frame.dim();
    let free = (n - 1) as u32;
    let low_bits = free.min(12);
    let high_count = 1u32 << (free - low_bits);
    let total = frame.operator_of(&(0..n).collect::<Vec<_>>());
    let slack = bounds.slack();
    let tie = 1e-12 * bounds.beta.abs().max(1.0);

    let evaluate = |mask: u32, g1: &CMat| -> Candidate {
        let g2 = &total - g1;
        let e1 = extremes(g1);
        let e2 = extremes(&g2);
        let v = bounds.violation(e1, e2);
        let feasible = v <= slack;
        Candidate {
            mask,
            feasible,
            key: if feasible { e1.1.max(e2.1) } else { v },
        }
    };

    let best = (0..high_count)
        .into_par_iter()
        .map(|high| {
            let base = high << low_bits;
            let mut g1 = CMat::zeros(m, m);
            add_outer(&mut g1, frame.vector(0), 1.0);
            for j in 0..free {
                if base & (1 << j) != 0 {
                    add_outer(&mut g1, frame.vector(j as usize + 1), 1.0);
                }
            }
            let mut best = evaluate(base, &g1);
            for t in 1..(1u32 << low_bits) {
                let j = t.trailing_zeros();
                let gray = t ^ (t >> 1);
                let sign = if gray & (1 << j) != 0 { 1.0 } else { -1.0 };
                add_outer(&mut g1, frame.vector(j as usize + 1), sign);
                best = better(best, evaluate(base | gray, &g1), tie);
            }
            best
        })
        .reduce_with(|a, b| better(a, b, tie))
        .expect("at least one partition");

    let mut first = vec![0];
    let mut second = Vec::new();
    for i in 1..n {
        if best.mask & (1 << (i - 1)) != 0 {
            first.push(i);
        } else {
            second.push(i);
        }
    }
    Ok(Partition::assemble(
        frame,
        first,
        second,
        bounds,
        PartitionEngine::BruteForce,
    ))
}

struct SearchState {
    first: Vec<usize>,
    second: Vec<usize>,
    g1: CMat,
}

fn swap_cost(
    frame: &FiniteFrame,
    total: &CMat,
    g1: &CMat,
    out: usize,
    into: usize,
    bounds: &PartitionBounds,
) -> (f64, f64) {
    let mut g = g1.clone();
    add_outer(&mut g, frame.vector(out), -1.0);
    add_outer(&mut g, frame.vector(into), 1.0);
    let g2 = total - &g;
    let e1 = extremes(&g);
    let e2 = extremes(&g2);
    (bounds.violation(e1, e2), e1.1.max(e2.1))
}

fn local_search_once(
    frame: &FiniteFrame,
    total: &CMat,
    bounds: &PartitionBounds,
    seed: u64,
    restart: u64,
) -> (Vec<usize>, Vec<usize>) {
    let n = frame.len();
    let mut rng = rng::stream(seed, restart);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let half = n / 2;
    let mut state = SearchState {
        first: order[..half].to_vec(),
        second: order[half..].to_vec(),
        g1: CMat::zeros(frame.dim(), frame.dim()),
    };
    for &i in &state.first {
        add_outer(&mut state.g1, frame.vector(i), 1.0);
    }
    let g2 = total - &state.g1;
    let mut current = bounds.violation(extremes(&state.g1), extremes(&g2));
    let slack = bounds.slack();
    let mut stalls = 0;
    for _ in 0..LOCAL_SEARCH_ITERATIONS {
        if current <= slack || stalls >= LOCAL_SEARCH_STALLS || state.first.is_empty() {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for _ in 0..LOCAL_SEARCH_PAIRS {
            let a = rng.random_range(0..state.first.len());
            let b = rng.random_range(0..state.second.len());
            let (v, _) = swap_cost(
                frame,
                total,
                &state.g1,
                state.first[a],
                state.second[b],
                bounds,
            );
            if best.is_none_or(|(bv, _, _)| v < bv) {
                best = Some((v, a, b));
            }
        }
        match best {
            Some((v, a, b)) if v < current => {
                let (out, into) = (state.first[a], state.second[b]);
                add_outer(&mut state.g1, frame.vector(out), -1.0);
                add_outer(&mut state.g1, frame.vector(into), 1.0);
                state.first[a] = into;
                state.second[b] = out;
                current = v;
                stalls = 0;
            }
            _ => stalls += 1,
        }
    }
    (state.first, state.second)
}

/// Randomised swap search from balanced random partitions, in batches of
/// restarts until a batch produces a feasible partition or the restart
/// budget is spent. The result is re-checked by an eigen-solve.
pub fn local_search_partition(
    frame: &FiniteFrame,
    bounds: PartitionBounds,
    seed: u64,
) -> Partition {
    let n = frame.len();
    let total = frame.operator_of(&(0..n).collect::<Vec<_>>());
    let mut best: Option<Partition> = None;
    let mut restart = 0;
    while restart < LOCAL_SEARCH_RESTARTS {
        let batch: Vec<u64> = (restart..(restart + LOCAL_SEARCH_BATCH).min(LOCAL_SEARCH_RESTARTS))
            .map(|r| r as u64)
            .collect();
        restart += batch.len();
        let found: Vec<Partition> = batch
            .par_iter()
            .map(|&r| {
                let (first, second) = local_search_once(frame, &total, &bounds, seed, r);
                Partition::assemble(frame, first, second, bounds, PartitionEngine::LocalSearch)
            })
            .collect();
        for p in found {
            let replace = match &best {
                None => true,
                Some(b) => rank(&p, &bounds) < rank(b, &bounds),
            };
            if replace {
                best = Some(p);
            }
        }
        if best.as_ref().is_some_and(|p| p.feasible) {
            break;
        }
    }
    best.expect("at least one restart")
}

fn rank(p: &Partition, bounds: &PartitionBounds) -> (bool, f64) {
    let key = if p.feasible {
        p.worse_lambda_max()
    } else {
        bounds.violation(p.first_bounds, p.second_bounds)
    };
    (!p.feasible, key)
}

/// Exhaustive search up to [`BRUTE_FORCE_LIMIT`] vectors, local search above.
pub fn partition_with(
    frame: &FiniteFrame,
    bounds: PartitionBounds,
    seed: u64,
) -> Result<Partition> {
    if frame.len() <= BRUTE_FORCE_LIMIT {
        brute_force_partition_with(frame, bounds)
    } else {
        Ok(local_search_partition(frame, bounds, seed))
    }
}
