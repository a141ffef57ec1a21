use serde::{Deserialize, Serialize};

use super::constants::{alpha_beta_recursion, constant_budget, AlphaBeta, Regime};
use super::frame::{Criterion, FiniteFrame, SubsampleMethod, SubsampleResult, CERTIFY_TOLERANCE};
use super::partition::{partition_with, Partition, PartitionBounds, PartitionEngine};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalvingStep {
    pub level: usize,
    pub size_before: usize,
    pub size_after: usize,
    /// Frame bounds assumed for the class being split.
    pub alpha: f64,
    pub beta: f64,
    /// Bounds the kept class must meet.
    pub next_alpha: f64,
    pub next_beta: f64,
    pub achieved: (f64, f64),
    pub engine: PartitionEngine,
    /// `beta / size_before`.
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalvingRun {
    pub result: SubsampleResult,
    pub steps: Vec<HalvingStep>,
    /// `None` in the small regime, where no halving is needed.
    pub recursion: Option<AlphaBeta>,
}

/// Splits `indices` of `frame` with the two-class bounds for `(eps, alpha,
/// beta)` and returns the smaller class (as indices into `frame`) together
/// with the partition of the sub-frame.
pub fn halving_step(
    frame: &FiniteFrame,
    indices: &[usize],
    eps: f64,
    alpha: f64,
    beta: f64,
    seed: u64,
) -> Result<(Vec<usize>, Partition)> {
    let sub = frame.sub_frame(indices)?;
    let bounds = PartitionBounds::corollary(eps, alpha, beta);
    let partition = partition_with(&sub, bounds, seed)?;
    let kept = partition
        .smaller_class()
        .iter()
        .map(|&i| indices[i])
        .collect();
    Ok((kept, partition))
}

fn check_hypotheses(frame: &FiniteFrame, k1: f64, k2: f64, k3: f64) -> Result<()> {
    let (n, m) = (frame.len() as f64, frame.dim() as f64);
    let tol = 1.0 + CERTIFY_TOLERANCE;
    if frame.norm_bound() > k1 * m / n * tol {
        return Err(Error::Precondition(format!(
            "max |u_i|^2 = {} exceeds k1 m/n = {}",
            frame.norm_bound(),
            k1 * m / n
        )));
    }
    let (lo, hi) = frame.frame_bounds();
    if lo * tol < k2 || hi > k3 * tol {
        return Err(Error::Precondition(format!(
            "frame bounds [{lo}, {hi}] not inside [k2, k3] = [{k2}, {k3}]"
        )));
    }
    Ok(())
}

/// Subsamples a frame with norm bound `k1 m/n` and frame bounds `[k2, k3]`
/// to at most `c1 m` vectors by repeated two-class splits, keeping the
/// smaller class each time.
///
/// Splits of at most 24 vectors are exhaustive; larger ones use local
/// search, so a step can fail to meet its bounds without contradicting the
/// existence result, which is reported as a search failure.
pub fn recursive_halving(
    frame: &FiniteFrame,
    k1: f64,
    k2: f64,
    k3: f64,
    seed: u64,
) -> Result<HalvingRun> {
    check_hypotheses(frame, k1, k2, k3)?;
    let (n, m) = (frame.len(), frame.dim());
    let budget = constant_budget(k1, k2, k3, n as f64 / m as f64)?;
    let all: Vec<usize> = (0..n).collect();
    if budget.regime == Regime::Small {
        let result = SubsampleResult::certify(
            frame,
            all,
            SubsampleMethod::RecursiveHalving,
            Criterion::Budget(budget),
        );
        return Ok(HalvingRun {
            result,
            steps: Vec::new(),
            recursion: None,
        });
    }

    let delta = k1 * m as f64 / n as f64;
    let recursion = alpha_beta_recursion(delta, k2, k3)?;
    let mut current = all;
    let mut steps = Vec::with_capacity(recursion.last_level + 1);
    for level in 0..=recursion.last_level {
        let (alpha, beta) = (recursion.alphas[level], recursion.betas[level]);
        let (next_alpha, next_beta) = (recursion.alphas[level + 1], recursion.betas[level + 1]);
        let step_seed = seed.wrapping_add(level as u64);
        let (kept, partition) = halving_step(frame, &current, delta, alpha, beta, step_seed)?;
        let achieved = frame.bounds_of(&kept);
        let tol = CERTIFY_TOLERANCE;
        if achieved.0 < next_alpha * (1.0 - tol) || achieved.1 > next_beta * (1.0 + tol) {
            return Err(Error::SearchFailure(format!(
                "halving level {level} ({} vectors, {:?}): kept class has bounds \
                 [{}, {}], needs [{next_alpha}, {next_beta}]",
                current.len(),
                partition.engine,
                achieved.0,
                achieved.1
            )));
        }
        steps.push(HalvingStep {
            level,
            size_before: current.len(),
            size_after: kept.len(),
            alpha,
            beta,
            next_alpha,
            next_beta,
            achieved,
            engine: partition.engine,
            phi: beta / current.len() as f64,
        });
        current = kept;
    }
    for w in steps.windows(2) {
        if w[1].phi < w[0].phi * (1.0 - 1e-12) {
            return Err(Error::Consistency(format!(
                "beta_l / #J_l decreased from {} to {} at level {}",
                w[0].phi, w[1].phi, w[1].level
            )));
        }
    }
    let result = SubsampleResult::certify(
        frame,
        current,
        SubsampleMethod::RecursiveHalving,
        Criterion::Budget(budget),
    );
    Ok(HalvingRun {
        result,
        steps,
        recursion: Some(recursion),
    })
}
