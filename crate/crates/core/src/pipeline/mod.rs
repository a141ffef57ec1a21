//! End-to-end recovery experiments: draw nodes, certify, optionally
//! subsample, recover, and measure the exact worst-case error.

mod fit;
mod wce;

use std::sync::OnceLock;

pub use fit::{fit_rate, LogPowerFit, RateFit};
pub use wce::{
    default_truncation, error_basis, error_split, truncated_error_matrix, worst_case_error,
    ErrorReport, RecoveryMethod, TailCertificate, KERNEL_TAIL_LIMIT, TRUNCATION_RATIO,
};

use crate::concentration::{certify_nodes, smallest_n};
use crate::density::{NodeSet, SamplingDensity};
use crate::error::{Error, Result};
use crate::leastsq::build_matrix;
use crate::spectrum::{KernelModel, SpectralBasis};
use crate::weaver::{barrier_greedy_order, remark_constant_chain, FiniteFrame};

/// Redraws allowed when a node set fails certification.
pub const MAX_RETRIES: usize = 20;
/// The greedy subsample starts at `4 m` nodes ...
pub const SUBSAMPLE_FACTOR: usize = 4;
/// ... and may grow to `8 m` if the smaller set is not full rank.
pub const SUBSAMPLE_MAX_FACTOR: usize = 8;
/// Candidates for the greedy are the first `16 m` drawn nodes.
pub const POOL_FACTOR: usize = 16;

fn c5() -> Result<f64> {
    static C5: OnceLock<f64> = OnceLock::new();
    if let Some(v) = C5.get() {
        return Ok(*v);
    }
    let v = remark_constant_chain()?.c5;
    Ok(*C5.get_or_init(|| v))
}

/// `c5 (log m / m) sum_{k >= floor(m/2)} sigma_k^2`.
pub fn paper_bound_rhs(basis: &SpectralBasis, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::range("m", m, ">= 2"));
    }
    let mf = m as f64;
    let tail = basis.tail_sum(m / 2).upper();
    Ok(c5()? * mf.ln() / mf * tail)
}

/// Draws `smallest_n(m, 40)` nodes, redrawing until the weighted frame is
/// certified, optionally reduces them with the greedy subsampler, and
/// reports the worst-case error of the recovery on the kept nodes.
///
/// Draw `t` uses stream `t` of `seed`, so a run is reproducible from
/// `(model, m, method, r, seed)`.
pub fn run_recovery_experiment(
    model: &KernelModel,
    m: usize,
    method: RecoveryMethod,
    r: f64,
    seed: u64,
) -> Result<ErrorReport> {
    if m < 2 {
        return Err(Error::range("m", m, ">= 2"));
    }
    if method == RecoveryMethod::Given {
        return Err(Error::InvalidArgument(
            "experiments draw their own nodes; use worst_case_error for given nodes".into(),
        ));
    }
    let m_trunc = default_truncation(model, m)?;
    let basis = error_basis(model, m_trunc)?;
    let n = smallest_n(m, 40.0)?;
    let density = SamplingDensity::new(&basis, m)?;

    let mut retries = 0;
    let nodes = loop {
        let nodes = density.draw_nodes_stream(n, seed, retries as u64)?;
        if certify_nodes(&basis, &nodes, m, r)?.passed {
            break nodes;
        }
        retries += 1;
        if retries > MAX_RETRIES {
            return Err(Error::Certification { attempts: retries });
        }
    };

    let kept = match method {
        RecoveryMethod::RandomThenSubsample => subsample_nodes(&basis, &nodes, m)?,
        _ => nodes,
    };
    let mut report = worst_case_error(&basis, &kept, m, m_trunc)?;
    report.n_drawn = n;
    report.method = method;
    report.seed = seed;
    report.retries = retries;
    Ok(report)
}

/// Greedy selection of `4m` (up to `8m`) nodes from the first `16m` drawn,
/// on the frame of weighted matrix rows.
pub fn subsample_nodes(basis: &SpectralBasis, nodes: &NodeSet, m: usize) -> Result<NodeSet> {
    let pool_size = (POOL_FACTOR * m).min(nodes.len());
    let pool: Vec<usize> = (0..pool_size).collect();
    let pool_nodes = nodes.select(&pool);
    let matrix = build_matrix(basis, &pool_nodes, m, true)?;
    let frame = FiniteFrame::from_frame_matrix(&matrix)?;
    let order = barrier_greedy_order(&frame, SUBSAMPLE_MAX_FACTOR * m)?;
    let mut target = SUBSAMPLE_FACTOR * m;
    while target <= SUBSAMPLE_MAX_FACTOR * m {
        let take = target.min(order.len());
        let mut chosen = order[..take].to_vec();
        chosen.sort_unstable();
        let (lo, hi) = frame.bounds_of(&chosen);
        if lo > crate::weaver::CERTIFY_TOLERANCE * hi {
            return Ok(pool_nodes.select(&chosen));
        }
        target += m;
    }
    Err(Error::Certification {
        attempts: SUBSAMPLE_MAX_FACTOR - SUBSAMPLE_FACTOR + 1,
    })
}
