//! Empirical Kolmogorov distance to the standard normal, with the DKW
//! confidence band used as the Monte Carlo noise floor.

use super::normal::std_normal_cdf;
use crate::{Error, Result};

/// Kolmogorov distance estimate together with its DKW band.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DistanceEstimate {
    /// `sup_x |F_n(x) - Phi(x)|` over the sample.
    pub distance: f64,
    /// Distribution-free DKW band at the configured confidence level.
    pub dkw: f64,
    /// Number of samples behind the estimate.
    pub n: usize,
}

/// DKW band `sqrt(ln(2 / (1 - level)) / (2n))`.
pub fn dkw_band(n: usize, level: f64) -> f64 {
    let alpha = 1.0 - level;
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Exact sup-distance between the empirical CDF of `samples` and `Phi`.
///
/// The supremum of the step-function difference is attained at a sample
/// point, approached from the left or from the right, so it suffices to
/// compare `i/n` and `(i-1)/n` against `Phi` at each sorted sample.
/// Non-finite entries are rejected with the offending path index.
pub fn kolmogorov_distance(samples: &[f64], dkw_level: f64) -> Result<DistanceEstimate> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "kolmogorov distance needs >= 2 samples, got {}",
            samples.len()
        )));
    }
    if let Some(path) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSample { path });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));

    let n = sorted.len() as f64;
    let mut sup = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let phi = std_normal_cdf(x);
        let hi = ((i + 1) as f64 / n - phi).abs();
        let lo = (i as f64 / n - phi).abs();
        sup = sup.max(hi).max(lo);
    }
    Ok(DistanceEstimate {
        distance: sup,
        dkw: dkw_band(sorted.len(), dkw_level),
        n: sorted.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::normal::std_normal_cdf;

    /// Inverse Phi by bisection; test-only oracle helper.
    fn phi_inverse(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_spaced_samples() {
        // Samples at the (i - 1/2)/n quantiles leave a gap of exactly 1/(2n).
        let n = 100;
        let samples: Vec<f64> = (0..n)
            .map(|i| phi_inverse((i as f64 + 0.5) / n as f64))
            .collect();
        let est = kolmogorov_distance(&samples, 0.99).unwrap();
        assert!((est.distance - 0.005).abs() < 1e-9, "got {}", est.distance);
    }

    #[test]
    fn single_point_needs_two() {
        assert!(kolmogorov_distance(&[0.0], 0.99).is_err());
    }

    #[test]
    fn two_points_at_zero() {
        // ECDF jumps 0 -> 1/2 -> 1 at x = 0 where Phi = 1/2; sup is 1/2.
        let est = kolmogorov_distance(&[0.0, 0.0], 0.99).unwrap();
        assert!((est.distance - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_with_index() {
        let err = kolmogorov_distance(&[0.0, f64::NAN, 1.0], 0.99).unwrap_err();
        match err {
            crate::Error::NonFiniteSample { path } => assert_eq!(path, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn matches_dense_grid_scan() {
        // Brute-force oracle: scan sup |F_n - Phi| over a dense x grid and
        // compare with the closed-form sorted-sample computation.
        let mut state = 0x9e3779b97f4a7c15u64;
        for case in 0..100 {
            let n = 3 + (case % 37);
            let samples: Vec<f64> = (0..n)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state >> 11) as f64 / (1u64 << 53) as f64 * 6.0 - 3.0
                })
                .collect();
            let est = kolmogorov_distance(&samples, 0.99).unwrap();

            let mut sorted = samples.clone();
            sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            let ecdf = |x: f64| {
                sorted.iter().filter(|&&s| s <= x).count() as f64 / sorted.len() as f64
            };
            let mut brute = 0.0f64;
            let mut x = -4.0;
            while x <= 4.0 {
                brute = brute.max((ecdf(x) - std_normal_cdf(x)).abs());
                x += 1e-3;
            }
            assert!(
                est.distance >= brute - 1e-9 && est.distance <= brute + 2e-3,
                "closed form {} vs grid {}",
                est.distance,
                brute
            );
        }
    }

    #[test]
    fn dkw_band_value() {
        // 99%: sqrt(ln(200) / (2n))
        let want = (200.0f64.ln() / 200.0).sqrt();
        assert!((dkw_band(100, 0.99) - want).abs() < 1e-12);
    }
}
