//! Mixing coefficients and the analytic dependence bounds built on them.
//!
//! Coefficients are stored for an explicit lag list rather than a closed
//! form, so exact and fitted profiles share one representation.

mod chain;
pub mod verify;

pub use chain::{
    alpha_exact_enumerated, expect_interval_product, phi_exact_enumerated, phi_markov_reduced,
    FiniteChainSpec, PastFutureJoint, StochasticMatrix, DEFAULT_ENUMERATION_BUDGET,
};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Lemma constant for the product bound. The appendix proof only asserts
/// existence; this value is validated empirically by the enumeration suite
/// and is configurable at the call site.
pub const PRODUCT_LEMMA_CONSTANT: f64 = 4.0;

const MONOTONE_TOL: f64 = 1e-10;

/// How the stored coefficients were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exactness {
    /// Certified by the structure of the generating process.
    ExactByConstruction,
    /// Computed as a genuine supremum over events on a finite chain.
    ExactEnumerated,
    /// Fitted or otherwise estimated.
    Fitted,
}

/// Polynomial decay envelope `coef(m) <= k * m^(-p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayModel {
    pub k: f64,
    pub p: f64,
}

impl DecayModel {
    /// Envelope value at lag `m`.
    pub fn at(&self, m: u32) -> f64 {
        self.k * f64::from(m).powf(-self.p)
    }
}

/// Mixing coefficients by lag, with provenance and an optional decay
/// envelope.
///
/// Serializes as `{lags: [...], values: [...], exactness, decay_model?}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingProfile {
    coefficients: BTreeMap<u32, f64>,
    exactness: Exactness,
    decay_model: Option<DecayModel>,
}

#[derive(Serialize, Deserialize)]
struct ProfileWire {
    lags: Vec<u32>,
    values: Vec<f64>,
    exactness: Exactness,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay_model: Option<DecayModel>,
}

impl Serialize for MixingProfile {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ProfileWire {
            lags: self.coefficients.keys().copied().collect(),
            values: self.coefficients.values().copied().collect(),
            exactness: self.exactness,
            decay_model: self.decay_model,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MixingProfile {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = ProfileWire::deserialize(deserializer)?;
        if wire.lags.len() != wire.values.len() {
            return Err(serde::de::Error::custom("lags/values length mismatch"));
        }
        let coefficients = wire.lags.into_iter().zip(wire.values).collect();
        MixingProfile::new(coefficients, wire.exactness, wire.decay_model)
            .map_err(serde::de::Error::custom)
    }
}

impl MixingProfile {
    /// Validates and builds a profile.
    ///
    /// Invariants enforced: every value in `[0, 1]`, non-increasing in the
    /// lag, and dominated by the decay envelope when one is declared.
    pub fn new(
        coefficients: BTreeMap<u32, f64>,
        exactness: Exactness,
        decay_model: Option<DecayModel>,
    ) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidProfile("no coefficients".into()));
        }
        let mut prev: Option<f64> = None;
        for (&m, &v) in &coefficients {
            if m == 0 {
                return Err(Error::InvalidProfile("lags start at 1".into()));
            }
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::InvalidProfile(format!(
                    "coefficient at lag {m} is {v}, outside [0, 1]"
                )));
            }
            if let Some(p) = prev {
                if v > p + MONOTONE_TOL {
                    return Err(Error::InvalidProfile(format!(
                        "coefficients increase at lag {m}: {v} > {p}"
                    )));
                }
            }
            if let Some(model) = decay_model {
                if v > model.at(m) + MONOTONE_TOL {
                    return Err(Error::InvalidProfile(format!(
                        "coefficient at lag {m} ({v}) exceeds envelope {}",
                        model.at(m)
                    )));
                }
            }
            prev = Some(v);
        }
        Ok(Self {
            coefficients,
            exactness,
            decay_model,
        })
    }

    /// Profile from `(lag, value)` pairs.
    pub fn from_pairs(
        pairs: impl IntoIterator<Item = (u32, f64)>,
        exactness: Exactness,
        decay_model: Option<DecayModel>,
    ) -> Result<Self> {
        Self::new(pairs.into_iter().collect(), exactness, decay_model)
    }

    pub fn exactness(&self) -> Exactness {
        self.exactness
    }

    pub fn decay_model(&self) -> Option<DecayModel> {
        self.decay_model
    }

    /// Stored coefficient at lag `m`, if present.
    pub fn at(&self, m: u32) -> Option<f64> {
        self.coefficients.get(&m).copied()
    }

    /// Upper bound at lag `m`: the stored value at the largest stored lag
    /// `<= m` (valid by monotonicity), or 1 when `m` precedes every stored
    /// lag.
    pub fn bound_at(&self, m: u32) -> f64 {
        self.coefficients
            .range(..=m)
            .next_back()
            .map(|(_, &v)| v)
            .unwrap_or(1.0)
    }

    pub fn lags(&self) -> impl Iterator<Item = u32> + '_ {
        self.coefficients.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.coefficients.iter().map(|(&m, &v)| (m, v))
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Upper bound on the alpha-mixing profile from a phi profile, via
/// `alpha(m) <= phi(m) / 2`. The decay envelope is carried along with its
/// constant halved.
pub fn alpha_upper_from_phi(profile: &MixingProfile) -> MixingProfile {
    let coefficients = profile
        .coefficients
        .iter()
        .map(|(&m, &v)| (m, 0.5 * v))
        .collect();
    let decay_model = profile.decay_model.map(|d| DecayModel {
        k: 0.5 * d.k,
        p: d.p,
    });
    MixingProfile::new(coefficients, profile.exactness, decay_model)
        .expect("halving preserves profile invariants")
}

/// Result of fitting `phi(m) ~= K * m^(-p)` on the log-log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyDecayFit {
    pub k: f64,
    pub p: f64,
    /// RMS residual in log space.
    pub residual: f64,
    /// Lags excluded because the model cannot represent exact zeros.
    pub excluded_zero_lags: Vec<u32>,
}

/// Least-squares fit of `log phi(m)` against `log m` over `lag_range`.
///
/// Zero coefficients are excluded (and reported): the polynomial model has
/// no representation for exact zeros. Needs at least three usable lags.
pub fn fit_polynomial_decay(
    profile: &MixingProfile,
    lag_range: std::ops::RangeInclusive<u32>,
) -> Result<PolyDecayFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for (m, v) in profile.iter() {
        if !lag_range.contains(&m) {
            continue;
        }
        if v > 0.0 {
            xs.push(f64::from(m).ln());
            ys.push(v.ln());
        } else {
            excluded.push(m);
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "polynomial decay fit needs >= 3 positive lags in range, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(PolyDecayFit {
        k: intercept.exp(),
        p: -slope,
        residual: (rss / n).sqrt(),
        excluded_zero_lags: excluded,
    })
}

/// Decoupling bound `D * phi(m)` on `|E[nu(xi, eta)] - E[nu(xi, eta_hat)]|`
/// for `|nu| <= D`.
pub fn decoupling_bound(sup_norm_d: f64, phi_m: f64) -> f64 {
    debug_assert!(sup_norm_d >= 0.0 && (0.0..=1.0).contains(&phi_m));
    sup_norm_d * phi_m
}

/// Product bound `A * (prod C_j) * (d - 1) * alpha(m)` on
/// `|E[prod Y_j] - prod E[Y_j]|` for `|Y_j| <= C_j` on intervals separated
/// by at least `m`, with the default constant [`PRODUCT_LEMMA_CONSTANT`].
pub fn product_lemma_bound(sup_norms: &[f64], alpha_m: f64, constant: f64) -> f64 {
    debug_assert!(!sup_norms.is_empty());
    let d = sup_norms.len();
    if d == 1 {
        return 0.0;
    }
    constant * sup_norms.iter().product::<f64>() * (d as f64 - 1.0) * alpha_m
}

/// Covariance bound `6 * rho^(2/3) * alpha^(1/3)` for centered variables
/// with third absolute moments at most `rho`.
pub fn rio_covariance_bound(rho: f64, alpha_ij: f64) -> f64 {
    debug_assert!(rho >= 0.0 && (0.0..=1.0).contains(&alpha_ij));
    6.0 * rho.powf(2.0 / 3.0) * alpha_ij.powf(1.0 / 3.0)
}

/// Exact phi profile of a finite chain over all lags `1..horizon`.
pub fn phi_profile_enumerated(chain: &FiniteChainSpec, budget: u128) -> Result<MixingProfile> {
    let mut pairs = BTreeMap::new();
    for m in 1..chain.horizon() as u32 {
        pairs.insert(m, phi_exact_enumerated(chain, m as usize, budget)?);
    }
    MixingProfile::new(pairs, Exactness::ExactEnumerated, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile_from(vals: &[(u32, f64)]) -> MixingProfile {
        MixingProfile::from_pairs(vals.iter().copied(), Exactness::Fitted, None).unwrap()
    }

    #[test]
    fn profile_rejects_out_of_range() {
        assert!(MixingProfile::from_pairs([(1, 1.5)], Exactness::Fitted, None).is_err());
        assert!(MixingProfile::from_pairs([(1, -0.1)], Exactness::Fitted, None).is_err());
    }

    #[test]
    fn profile_rejects_increasing() {
        assert!(MixingProfile::from_pairs([(1, 0.1), (2, 0.2)], Exactness::Fitted, None).is_err());
    }

    #[test]
    fn profile_enforces_envelope() {
        let model = Some(DecayModel { k: 1.0, p: 2.0 });
        assert!(MixingProfile::from_pairs([(2, 0.3)], Exactness::Fitted, model).is_err());
        assert!(MixingProfile::from_pairs([(2, 0.25)], Exactness::Fitted, model).is_ok());
    }

    #[test]
    fn alpha_halves_phi_and_envelope() {
        let phi = MixingProfile::from_pairs(
            [(1, 0.5), (2, 0.125)],
            Exactness::ExactEnumerated,
            Some(DecayModel { k: 0.5, p: 2.0 }),
        )
        .unwrap();
        let alpha = alpha_upper_from_phi(&phi);
        assert_eq!(alpha.at(1), Some(0.25));
        assert_eq!(alpha.at(2), Some(0.0625));
        let model = alpha.decay_model().unwrap();
        assert_eq!(model.k, 0.25);
        assert_eq!(model.p, 2.0);
    }

    #[test]
    fn alpha_of_zero_profile_is_zero() {
        let phi = profile_from(&[(1, 0.0), (2, 0.0)]);
        let alpha = alpha_upper_from_phi(&phi);
        assert!(alpha.iter().all(|(_, v)| v == 0.0));
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        // K m^-3 with K = 2 only yields admissible coefficients from lag 2
        // on (a profile value cannot exceed 1); the extrapolated intercept
        // still recovers K exactly on model-matching data.
        let pairs: Vec<(u32, f64)> = (2..=10).map(|m| (m, 2.0 * f64::from(m).powi(-3))).collect();
        let profile = profile_from(&pairs);
        let fit = fit_polynomial_decay(&profile, 2..=10).unwrap();
        assert!((fit.k - 2.0).abs() < 1e-9, "k = {}", fit.k);
        assert!((fit.p - 3.0).abs() < 1e-9, "p = {}", fit.p);
        assert!(fit.residual < 1e-12);
        assert!(fit.excluded_zero_lags.is_empty());
    }

    #[test]
    fn fit_matches_direct_regression_oracle() {
        // Geometric decay (Doeblin-like): compare against an independently
        // coded log-log regression, and check the p estimate grows with the
        // upper end of the lag range.
        let pairs: Vec<(u32, f64)> = (1..=12).map(|m| (m, 0.8 * 0.6f64.powi(m as i32))).collect();
        let profile = profile_from(&pairs);

        let direct = |range: std::ops::RangeInclusive<u32>| {
            let pts: Vec<(f64, f64)> = pairs
                .iter()
                .filter(|(m, _)| range.contains(m))
                .map(|&(m, v)| (f64::from(m).ln(), v.ln()))
                .collect();
            let n = pts.len() as f64;
            let xb = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let yb = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxx: f64 = pts.iter().map(|p| (p.0 - xb) * (p.0 - xb)).sum();
            let sxy: f64 = pts.iter().map(|p| (p.0 - xb) * (p.1 - yb)).sum();
            -sxy / sxx
        };

        let fit_short = fit_polynomial_decay(&profile, 1..=6).unwrap();
        let fit_long = fit_polynomial_decay(&profile, 1..=12).unwrap();
        assert!((fit_short.p - direct(1..=6)).abs() < 1e-12);
        assert!((fit_long.p - direct(1..=12)).abs() < 1e-12);
        // Geometric decay looks steeper and steeper through a polynomial lens.
        assert!(fit_long.p > fit_short.p);
        assert!(fit_long.residual > 0.0);
    }

    #[test]
    fn fit_needs_three_positive_lags() {
        let profile = profile_from(&[(1, 0.0), (2, 0.0), (3, 0.0)]);
        assert!(matches!(
            fit_polynomial_decay(&profile, 1..=3),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn zero_lags_are_excluded_and_reported() {
        let profile = profile_from(&[(1, 0.5), (2, 0.25), (3, 0.1), (4, 0.0)]);
        let fit = fit_polynomial_decay(&profile, 1..=4).unwrap();
        assert_eq!(fit.excluded_zero_lags, vec![4]);
    }

    #[test]
    fn decoupling_bound_values() {
        assert_eq!(decoupling_bound(1.0, 0.0), 0.0);
        assert_eq!(decoupling_bound(2.0, 0.25), 0.5);
    }

    #[test]
    fn product_bound_values() {
        assert_eq!(product_lemma_bound(&[3.0], 0.9, PRODUCT_LEMMA_CONSTANT), 0.0);
        let b = product_lemma_bound(&[1.0, 1.0], 0.1, PRODUCT_LEMMA_CONSTANT);
        assert!((b - 0.4).abs() < 1e-15);
        let b3 = product_lemma_bound(&[2.0, 1.0, 0.5], 0.1, PRODUCT_LEMMA_CONSTANT);
        assert!((b3 - 4.0 * 1.0 * 2.0 * 0.1).abs() < 1e-15);
    }

    #[test]
    fn rio_bound_values() {
        assert_eq!(rio_covariance_bound(1.0, 1.0), 6.0);
        assert_eq!(rio_covariance_bound(1.0, 0.0), 0.0);
        let b = rio_covariance_bound(8.0, 0.125);
        assert!((b - 6.0 * 4.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn bound_at_uses_last_stored_lag() {
        let profile = profile_from(&[(1, 0.5), (4, 0.1)]);
        assert_eq!(profile.bound_at(1), 0.5);
        assert_eq!(profile.bound_at(3), 0.5);
        assert_eq!(profile.bound_at(4), 0.1);
        assert_eq!(profile.bound_at(100), 0.1);
    }

    #[test]
    fn profile_roundtrips_through_json() {
        let profile = MixingProfile::from_pairs(
            [(1, 0.5), (2, 0.2), (3, 0.0)],
            Exactness::ExactByConstruction,
            Some(DecayModel { k: 0.6, p: 1.5 }),
        )
        .unwrap();
        let json = serde_json::to_string(&profile).unwrap();
        assert!(json.contains("\"lags\":[1,2,3]"));
        assert!(json.contains("exact-by-construction"));
        let back: MixingProfile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, profile);
    }
}
