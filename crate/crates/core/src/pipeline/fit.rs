use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ErrorReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPowerFit {
    /// Exponent of `n`.
    pub slope: f64,
    /// Exponent of `log n`.
    pub log_power: f64,
    pub intercept: f64,
    pub rms: f64,
}

/// Least-squares fit of `log wce` against `log n_used`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `(n_used, wce)` pairs, sorted by `n_used`.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    pub rms: f64,
    /// Fit with an extra `log log n` regressor; `None` when the design is
    /// too ill-conditioned to separate the two.
    pub log_power_fit: Option<LogPowerFit>,
    /// Log power of the approximation numbers, `(d-1) s`.
    pub sigma_log_power: f64,
    /// Log power of the sampling-number upper bound, `(d-1) s + 1/2`.
    pub bound_log_power: f64,
}

fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.max();
    if sv.min() <= 1e-10 * max {
        return None;
    }
    svd.solve(y, 0.0).ok()
}

/// Fits the decay of the worst-case error in the number of nodes used.
/// Needs at least five reports whose `n_used` spans at least two octaves.
pub fn fit_rate(reports: &[ErrorReport], s: f64, d: usize) -> Result<RateFit> {
    if reports.len() < 5 {
        return Err(Error::Fit(format!(
            "need at least 5 reports, got {}",
            reports.len()
        )));
    }
    let mut points: Vec<(f64, f64)> = reports.iter().map(|r| (r.n_used as f64, r.wce)).collect();
    if points
        .iter()
        .any(|&(n, w)| !(n > 1.0 && w > 0.0 && w.is_finite()))
    {
        return Err(Error::Fit(
            "n_used must exceed 1 and wce be positive".into(),
        ));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (first, last) = (points[0].0, points[points.len() - 1].0);
    if last < 4.0 * first {
        return Err(Error::Fit(format!(
            "n_used spans [{first}, {last}], less than two octaves"
        )));
    }
    let k = points.len();
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y = DVector::from_iterator(k, points.iter().map(|p| p.1.ln()));

    let design = DMatrix::from_fn(k, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let coef = least_squares(&design, &y).ok_or_else(|| Error::Fit("degenerate grid".into()))?;
    let fitted = &design * &coef;
    let residuals: Vec<f64> = (0..k).map(|i| y[i] - fitted[i]).collect();
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / k as f64).sqrt();

    let log_power_fit = if k >= 4 {
        let design3 = DMatrix::from_fn(k, 3, |i, j| match j {
            0 => 1.0,
            1 => x[i],
            _ => x[i].ln(),
        });
        least_squares(&design3, &y).map(|c| {
            let f = &design3 * &c;
            let rms = ((0..k).map(|i| (y[i] - f[i]).powi(2)).sum::<f64>() / k as f64).sqrt();
            LogPowerFit {
                slope: c[1],
                log_power: c[2],
                intercept: c[0],
                rms,
            }
        })
    } else {
        None
    };

    let sigma_log_power = (d as f64 - 1.0) * s;
    Ok(RateFit {
        points,
        slope: coef[1],
        intercept: coef[0],
        residuals,
        rms,
        log_power_fit,
        sigma_log_power,
        bound_log_power: sigma_log_power + 0.5,
    })
}
