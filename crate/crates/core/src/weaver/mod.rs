//! Frame subsampling: two-class partitions with frame bounds, recursive
//! halving with tracked constants, and a greedy surrogate for large frames.

mod constants;
mod frame;
mod greedy;
mod halving;
mod partition;

pub use constants::{
    alpha_beta_recursion, constant_budget, gamma_product, remark_constant_chain, AlphaBeta,
    ChainEntry, ConstantBudget, ConstantChain, GammaProduct, Regime, GAMMA_BOUND, ZETA,
};
pub use frame::{
    perturbed_harmonic_frame, random_tight_frame, Criterion, FiniteFrame, SubsampleMethod,
    SubsampleResult, CERTIFY_TOLERANCE,
};
pub use greedy::{barrier_greedy_order, barrier_greedy_subsample};
pub use halving::{halving_step, recursive_halving, HalvingRun, HalvingStep};
pub use partition::{
    brute_force_partition, brute_force_partition_with, local_search_partition, partition_with,
    Partition, PartitionBounds, PartitionEngine, BRUTE_FORCE_LIMIT,
};
