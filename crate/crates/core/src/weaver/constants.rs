//! Constants of the subsampling theorem and the explicit constant chain of
//! the recovery bound.

use serde::{Deserialize, Serialize};

use crate::concentration::{smallest_n, KAPPA};
use crate::error::{Error, Result};

/// `2 + sqrt 2`.
pub const ZETA: f64 = 2.0 + std::f64::consts::SQRT_2;

/// Published upper bound on the infinite product.
pub const GAMMA_BOUND: f64 = 35.21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaProduct {
    /// Partial product (a lower bound on the infinite product).
    pub value: f64,
    /// `upper - value`, where `upper` bounds the infinite product.
    pub remainder: f64,
    pub upper: f64,
    /// Partial products after each factor.
    pub partials: Vec<f64>,
}

fn gamma_factor_base(level: usize) -> f64 {
    2f64.powf(-1.0 - level as f64 / 2.0)
}

/// `prod_{l>=0} (1 + a_l) / (1 - a_l)` with `a_l = 2^{-1-l/2}`.
///
/// The log of the neglected factors from level `L` on is at most
/// `sum_{l>=L} 2 a_l / (1 - a_l) <= 2 a_L / ((1 - a_L)(1 - 2^{-1/2}))`;
/// factors are multiplied in until `exp` of that bound minus one is below
/// `tolerance`.
pub fn gamma_product(tolerance: f64) -> Result<GammaProduct> {
    if !(tolerance > 0.0) {
        return Err(Error::range("tolerance", tolerance, "> 0"));
    }
    let ratio = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
    let mut value = 1.0;
    let mut partials = Vec::new();
    let mut level = 0;
    loop {
        let a = gamma_factor_base(level);
        let log_tail = 2.0 * a / ((1.0 - a) * ratio);
        let growth = log_tail.exp_m1();
        if growth <= tolerance {
            let upper = value * (1.0 + growth);
            return Ok(GammaProduct {
                value,
                remainder: upper - value,
                upper,
                partials,
            });
        }
        value *= (1.0 + a) / (1.0 - a);
        partials.push(value);
        level += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `n / m >= 47 k1 / k2`: recursive halving is needed.
    Large,
    /// `1 <= n / m < 47 k1 / k2`: the full index set already qualifies.
    Small,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantBudget {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub zeta: f64,
    pub gamma_product: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub regime: Regime,
}

/// Size and frame-bound constants `(c1, c2, c3)` for a frame with norm
/// bound `k1 m / n` and frame bounds `[k2, k3]`.
pub fn constant_budget(k1: f64, k2: f64, k3: f64, ratio_n_over_m: f64) -> Result<ConstantBudget> {
    for (name, v) in [("k1", k1), ("k2", k2), ("k3", k3)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::range(name, v, "(0, inf)"));
        }
    }
    if !(ratio_n_over_m >= 1.0) {
        return Err(Error::range("n/m", ratio_n_over_m, ">= 1"));
    }
    let gamma = gamma_product(1e-12)?;
    let threshold = 47.0 * k1 / k2;
    let (c1, c2, c3, regime) = if ratio_n_over_m >= threshold {
        (
            1642.0 * k1 / k2,
            ZETA * ZETA * k1,
            1642.0 * k1 * k3 / k2,
            Regime::Large,
        )
    } else {
        (threshold, k2, 47.0 * k1 * k3 / k2, Regime::Small)
    };
    Ok(ConstantBudget {
        k1,
        k2,
        k3,
        zeta: ZETA,
        gamma_product: gamma.upper,
        c1,
        c2,
        c3,
        regime,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    pub delta: f64,
    /// `L = max { l : alpha_l >= (2 zeta)^2 delta }`.
    pub last_level: usize,
    /// `alpha_0 ..= alpha_{L+1}`.
    pub alphas: Vec<f64>,
    /// `beta_0 ..= beta_{L+1}`.
    pub betas: Vec<f64>,
}

/// Lower and upper frame bounds along the halving recursion
/// `alpha_{l+1} = (1 - zeta sqrt(delta/alpha_l))/2 alpha_l`,
/// `beta_{l+1} = (1 + zeta sqrt(delta/alpha_l))/2 beta_l`, stopped one step
/// after the last level with `alpha_l >= (2 zeta)^2 delta`.
///
/// The halving bracket, the terminal window and the ratio bound are checked
/// on the computed sequences.
pub fn alpha_beta_recursion(delta: f64, k2: f64, k3: f64) -> Result<AlphaBeta> {
    if !(delta > 0.0) || !(k2 > 0.0) || !(k3 >= k2) {
        return Err(Error::InvalidArgument(format!(
            "need delta > 0 and 0 < k2 <= k3, got delta = {delta}, k2 = {k2}, k3 = {k3}"
        )));
    }
    let window = (2.0 * ZETA).powi(2) * delta;
    if delta >= k2 / (2.0 * ZETA).powi(2) {
        return Err(Error::Precondition(format!(
            "delta = {delta} must be below k2 / (2 zeta)^2 = {}; with delta = k1 m/n this \
             holds once n/m >= 47 k1/k2",
            k2 / (2.0 * ZETA).powi(2)
        )));
    }
    let mut alphas = vec![k2];
    let mut betas = vec![k3];
    while *alphas.last().unwrap() >= window {
        let a = *alphas.last().unwrap();
        let b = *betas.last().unwrap();
        let s = ZETA * (delta / a).sqrt();
        let next = (1.0 - s) / 2.0 * a;
        if !(next >= a / 4.0 && next < a / 2.0) {
            return Err(Error::Consistency(format!(
                "halving bracket violated: alpha = {a}, next = {next}"
            )));
        }
        alphas.push(next);
        betas.push((1.0 + s) / 2.0 * b);
    }
    let last_level = alphas.len() - 2;
    let a_end = alphas[last_level + 1];
    if !(ZETA * ZETA * delta <= a_end && a_end < window) {
        return Err(Error::Consistency(format!(
            "terminal alpha {a_end} outside [{}, {window})",
            ZETA * ZETA * delta
        )));
    }
    let ratio = betas[last_level + 1] / a_end;
    let gamma = gamma_product(1e-12)?;
    if ratio > gamma.upper * k3 / k2 {
        return Err(Error::Consistency(format!(
            "beta/alpha = {ratio} exceeds gamma k3/k2 = {}",
            gamma.upper * k3 / k2
        )));
    }
    Ok(AlphaBeta {
        delta,
        last_level,
        alphas,
        betas,
    })
}

/// One named value of the constant chain, with the interval it must lie in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ChainEntry {
    pub fn holds(&self) -> bool {
        self.value >= self.lower && self.value <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantChain {
    /// Smallest `n` with `2 <= n / (40 ln n)`.
    pub n_at_m2: usize,
    pub kappa: f64,
    pub c1: f64,
    pub budget: ConstantBudget,
    /// `40 ln(n(2))`, a lower bound on `n/m` for every `m >= 2`.
    pub ratio_lower_bound: f64,
    pub c3: f64,
    pub log_correction: f64,
    pub c4: f64,
    pub theta: f64,
    pub c5: f64,
    pub big_c: f64,
    pub small_c: f64,
    pub threshold: f64,
    /// Sum of the success probabilities of the two events at `n = n(2)`,
    /// `r = 2`.
    pub probability_sum: f64,
    pub entries: Vec<ChainEntry>,
}

impl ConstantChain {
    pub fn all_hold(&self) -> bool {
        self.entries.iter().all(ChainEntry::holds)
    }
}

/// Recomputes the explicit constants of the recovery bound from scratch.
pub fn remark_constant_chain() -> Result<ConstantChain> {
    let n2 = smallest_n(2, 40.0)?;
    let n2f = n2 as f64;
    let kappa = KAPPA;
    let c1 = 1.0 + 0.8 * kappa * kappa;
    let (k1, k2, k3) = (2.0, 0.5, 1.5);
    let ratio_lower_bound = 40.0 * n2f.ln();
    let budget = constant_budget(k1, k2, k3, ratio_lower_bound)?;
    let c3 = 1.0 / budget.c2;
    let log_correction = n2f * (n2f - 1.0).ln() / ((n2f - 1.0) * n2f.ln());
    let c4 = 1.0 + 40.0 * log_correction * c1 * c3;
    let nm1 = n2f - 1.0;
    let theta = (nm1.ln() - 40f64.ln() - nm1.ln().ln()) / n2f.ln();
    let c5 = 2.0 * c4 / theta;
    let big_c = 2.0 * c5 * budget.c1;
    let small_c = 1.0 / (4.0 * budget.c1);
    let threshold = 2.0 * budget.c1;
    let probability_sum = (1.0 - 2.0 / n2f) + (1.0 - 2f64.powf(0.75) / n2f);
    let exact = |name: &str, value: f64, want: f64| ChainEntry {
        name: name.into(),
        value,
        lower: want - 1e-9 * want.abs(),
        upper: want + 1e-9 * want.abs(),
    };
    let range = |name: &str, value: f64, lower: f64, upper: f64| ChainEntry {
        name: name.into(),
        value,
        lower,
        upper,
    };
    let entries = vec![
        exact("n(2)", n2f, 497.0),
        range("c1", c1, 3.09, 3.10),
        exact("c~1", budget.c1, 6568.0),
        exact("c~2", budget.c2, 2.0 * ZETA * ZETA),
        exact("c~3", budget.c3, 9852.0),
        range(
            "40 ln n(2) - 47 k1/k2",
            ratio_lower_bound - 47.0 * k1 / k2,
            0.0,
            f64::INFINITY,
        ),
        exact("c3", c3, 0.5 / (ZETA * ZETA)),
        range("c4", c4, 6.31, 6.32),
        range("theta", theta, 0.11, 0.12),
        range("c5", c5, 113.35, 113.36),
        range("C = 2 c5 c~1", big_c, 0.0, 1.5e6),
        range("c = 1/(4 c~1)", small_c, 3.8e-5, f64::INFINITY),
        exact("2 c~1", threshold, 13136.0),
        range("probability sum", probability_sum, 1.0 + f64::EPSILON, 2.0),
    ];
    Ok(ConstantChain {
        n_at_m2: n2,
        kappa,
        c1,
        budget,
        ratio_lower_bound,
        c3,
        log_correction,
        c4,
        theta,
        c5,
        big_c,
        small_c,
        threshold,
        probability_sum,
        entries,
    })
}
