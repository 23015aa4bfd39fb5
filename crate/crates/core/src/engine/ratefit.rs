//! Convergence-rate fitting on the log-log scale.
//!
//! Distances below their DKW band are indistinguishable from Monte Carlo
//! noise; fitting them would fabricate slopes, so such points are excluded
//! and reported.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which regressor the log-log fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateXAxis {
    /// Fit `log D` against `log N`.
    Horizon,
    /// Fit `log D` against `log sigma_N`.
    Sigma,
}

/// One grid observation entering a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    /// Regressor value before taking logs (N or sigma_N).
    pub x: f64,
    /// Estimated Kolmogorov distance.
    pub distance: f64,
    /// DKW band of the estimate; also the exclusion floor.
    pub dkw: f64,
}

/// Weighted least-squares fit of the rate exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Fitted exponent (slope of the log-log line).
    pub slope: f64,
    /// Intercept of the log-log line.
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    /// 95% confidence interval for the slope.
    pub ci95: (f64, f64),
    /// Number of points used.
    pub used_points: usize,
    /// Indices of points excluded as below the noise floor.
    pub excluded: Vec<usize>,
}

/// Outcome of a rate fit, including the degenerate statuses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FitOutcome {
    /// A usable fit.
    Fitted(RateFit),
    /// Every point sat below its DKW band.
    NoiseFloor,
    /// Fewer than three usable points remained.
    TooFewPoints {
        /// How many points survived the floor.
        usable: usize,
        /// Indices of points excluded as below the noise floor.
        excluded: Vec<usize>,
    },
}

impl FitOutcome {
    /// The fit, if one was produced.
    pub fn fit(&self) -> Option<&RateFit> {
        match self {
            FitOutcome::Fitted(fit) => Some(fit),
            _ => None,
        }
    }
}

/// Weighted least squares of `y` on `x` with per-point standard deviations.
/// Returns (slope, intercept, slope_se).
fn wls(x: &[f64], y: &[f64], sd: &[f64]) -> (f64, f64, f64) {
    let w: Vec<f64> = sd.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let xbar: f64 = x.iter().zip(&w).map(|(xi, wi)| xi * wi).sum::<f64>() / sw;
    let ybar: f64 = y.iter().zip(&w).map(|(yi, wi)| yi * wi).sum::<f64>() / sw;
    let sxx: f64 = x
        .iter()
        .zip(&w)
        .map(|(xi, wi)| wi * (xi - xbar) * (xi - xbar))
        .sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((xi, yi), wi)| wi * (xi - xbar) * (yi - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let slope_se = (1.0 / sxx).sqrt();
    (slope, intercept, slope_se)
}

/// Fits the rate exponent from grid rows `(x, D, dkw)`.
///
/// The polynomial model regresses `log D` on `log x` by weighted least
/// squares, with log-space standard deviations taken as `dkw / D` (delta
/// method on the band). The exponential-log-power variant is fitted by
/// [`log_power_fit`].
pub fn rate_fit(points: &[RatePoint]) -> Result<FitOutcome> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs >= 3 grid points, got {}",
            points.len()
        )));
    }
    let excluded: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.distance <= p.dkw)
        .map(|(i, _)| i)
        .collect();
    let usable: Vec<&RatePoint> = points.iter().filter(|p| p.distance > p.dkw).collect();
    if usable.is_empty() {
        return Ok(FitOutcome::NoiseFloor);
    }
    if usable.len() < 3 {
        return Ok(FitOutcome::TooFewPoints {
            usable: usable.len(),
            excluded,
        });
    }
    let x: Vec<f64> = usable.iter().map(|p| p.x.ln()).collect();
    let y: Vec<f64> = usable.iter().map(|p| p.distance.ln()).collect();
    let sd: Vec<f64> = usable.iter().map(|p| p.dkw / p.distance).collect();
    let (slope, intercept, slope_se) = wls(&x, &y, &sd);
    Ok(FitOutcome::Fitted(RateFit {
        slope,
        intercept,
        slope_se,
        ci95: (slope - 1.96 * slope_se, slope + 1.96 * slope_se),
        used_points: usable.len(),
        excluded,
    }))
}

/// Fits the exponential-mixing rate shape `D = c * x^(-1/2) * (log x)^q`.
///
/// The residual `log D + (1/2) log x` is regressed on `log log x`; the
/// returned slope is the recovered log-power `q`.
pub fn log_power_fit(points: &[RatePoint]) -> Result<FitOutcome> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "log-power fit needs >= 3 grid points, got {}",
            points.len()
        )));
    }
    let excluded: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.distance <= p.dkw)
        .map(|(i, _)| i)
        .collect();
    let usable: Vec<&RatePoint> = points.iter().filter(|p| p.distance > p.dkw).collect();
    if usable.is_empty() {
        return Ok(FitOutcome::NoiseFloor);
    }
    if usable.len() < 3 {
        return Ok(FitOutcome::TooFewPoints {
            usable: usable.len(),
            excluded,
        });
    }
    let x: Vec<f64> = usable.iter().map(|p| p.x.ln().ln()).collect();
    let y: Vec<f64> = usable
        .iter()
        .map(|p| p.distance.ln() + 0.5 * p.x.ln())
        .collect();
    let sd: Vec<f64> = usable.iter().map(|p| p.dkw / p.distance).collect();
    let (slope, intercept, slope_se) = wls(&x, &y, &sd);
    Ok(FitOutcome::Fitted(RateFit {
        slope,
        intercept,
        slope_se,
        ci95: (slope - 1.96 * slope_se, slope + 1.96 * slope_se),
        used_points: usable.len(),
        excluded,
    }))
}
