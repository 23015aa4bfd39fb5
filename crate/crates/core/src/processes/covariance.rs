//! Exact covariance ledgers for ledger-computable process variants.
//!
//! The ledger is the "exact arithmetic side" of the harness: block
//! constructions and bound checks run against it so that construction
//! errors are never conflated with Monte Carlo noise.

use super::{layout_links, BaseDist, LinkRole, ProcessSpec};
use crate::{Error, Result};

/// Cap on stored ledger entries (`n^2`); about 64 MB of covariances.
pub const DEFAULT_LEDGER_ENTRY_BUDGET: usize = 1 << 23;

/// Tilted-propagation tail cutoff for the Markov accumulation. Covariances
/// below this level are beyond double-precision resolution of the sums they
/// enter.
const MARKOV_TAIL_EPS: f64 = 1e-18;

/// Full pairwise covariance ledger `Cov(g_i, g_j)` with `1`-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceLedger {
    n: usize,
    cov: Vec<f64>,
}

impl CovarianceLedger {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `Cov(g_i, g_j)`, 1-based.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(1 <= i && i <= self.n && 1 <= j && j <= self.n);
        self.cov[(i - 1) * self.n + (j - 1)]
    }

    /// `Var(g_j)`, 1-based.
    pub fn var(&self, j: usize) -> f64 {
        self.at(j, j)
    }

    /// `Var(sum over the inclusive interval [lo, hi])`.
    pub fn var_interval(&self, lo: usize, hi: usize) -> f64 {
        debug_assert!(1 <= lo && lo <= hi && hi <= self.n);
        let mut total = 0.0;
        for i in lo..=hi {
            total += self.var(i);
            for j in i + 1..=hi {
                total += 2.0 * self.at(i, j);
            }
        }
        total
    }

    /// `Var(sum over an arbitrary index set)`, 1-based indices.
    pub fn var_indices(&self, indices: &[usize]) -> f64 {
        let mut total = 0.0;
        for (a, &i) in indices.iter().enumerate() {
            total += self.var(i);
            for &j in &indices[a + 1..] {
                total += 2.0 * self.at(i, j);
            }
        }
        total
    }

    /// `Var(S_N)`: the sum of all entries.
    pub fn sigma2(&self) -> f64 {
        self.var_interval(1, self.n)
    }

    /// Covariance between two disjoint index sets
    /// `Cov(sum_{i in a} g_i, sum_{j in b} g_j)`.
    pub fn cross_covariance(&self, a: &[usize], b: &[usize]) -> f64 {
        let mut total = 0.0;
        for &i in a {
            for &j in b {
                total += self.at(i, j);
            }
        }
        total
    }
}

/// Per-index scales for a spec (all ones without a schedule).
fn scales_of(spec: &ProcessSpec, n: usize) -> Vec<f64> {
    match spec {
        ProcessSpec::ScaledSchedule { schedule, .. } => {
            (1..=n).map(|j| schedule.at(j, n)).collect()
        }
        _ => vec![1.0; n],
    }
}

fn unscaled_of(spec: &ProcessSpec) -> &ProcessSpec {
    match spec {
        ProcessSpec::ScaledSchedule { inner, .. } => inner.as_ref(),
        other => other,
    }
}

/// Moving-average lag covariances `c(lag) = var_base * sum_t w_t w_{t+lag}`.
fn ma_lag_covariances(base: &BaseDist, weights: &[f64]) -> Vec<f64> {
    let w = weights.len() - 1;
    let vb = base.variance();
    (0..=w)
        .map(|lag| {
            vb * (0..=w - lag)
                .map(|t| weights[t] * weights[t + lag])
                .sum::<f64>()
        })
        .collect()
}

/// Builds the exact pairwise covariance ledger. Errors with
/// [`Error::LedgerUnavailable`] for post-mapped processes and with
/// [`Error::BudgetExceeded`] when `n^2` exceeds `entry_budget`.
pub fn exact_cov(spec: &ProcessSpec, n: usize, entry_budget: usize) -> Result<CovarianceLedger> {
    spec.validate(n)?;
    if n.checked_mul(n).map(|e| e > entry_budget).unwrap_or(true) {
        return Err(Error::BudgetExceeded {
            atoms: (n as u128) * (n as u128),
            budget: entry_budget as u128,
        });
    }
    let scales = scales_of(spec, n);
    let inner = unscaled_of(spec);
    let mut cov = vec![0.0; n * n];

    match inner {
        ProcessSpec::Iid { base } => {
            let v = base.variance();
            for j in 0..n {
                cov[j * n + j] = v;
            }
        }
        ProcessSpec::MDependent {
            base,
            weights,
            post_map,
        } => {
            if !post_map.is_identity() {
                return Err(Error::LedgerUnavailable(
                    "post-mapped moving averages have no closed-form covariance".into(),
                ));
            }
            let lags = ma_lag_covariances(base, weights);
            let w = weights.len() - 1;
            for i in 0..n {
                for j in i..n.min(i + w + 1) {
                    cov[i * n + j] = lags[j - i];
                    cov[j * n + i] = lags[j - i];
                }
            }
        }
        ProcessSpec::InhomogeneousMarkov { state_values, .. } => {
            let chain = inner.instantiate_chain(n)?;
            let offsets = inner.center_observables(n)?.offsets;
            let marginals = chain.marginals();
            for i in 1..=n {
                let law_i = &marginals[i - 1];
                let h_i: Vec<f64> = state_values.iter().map(|&v| v - offsets[i - 1]).collect();
                cov[(i - 1) * n + (i - 1)] =
                    law_i.iter().zip(&h_i).map(|(&p, &h)| p * h * h).sum();
                // Tilted forward propagation: v_t(y) = sum_x law_i(x)
                // h_i(x) P_{i->t}(x, y).
                let mut tilted: Vec<f64> =
                    law_i.iter().zip(&h_i).map(|(&p, &h)| p * h).collect();
                for t in i + 1..=n {
                    tilted = chain.step(t - 1).propagate(&tilted);
                    let h_t: Vec<f64> =
                        state_values.iter().map(|&v| v - offsets[t - 1]).collect();
                    let c: f64 = tilted.iter().zip(&h_t).map(|(&v, &h)| v * h).sum();
                    cov[(i - 1) * n + (t - 1)] = c;
                    cov[(t - 1) * n + (i - 1)] = c;
                    if tilted.iter().all(|v| v.abs() < MARKOV_TAIL_EPS) {
                        break;
                    }
                }
            }
        }
        ProcessSpec::CoupledPairs { links } => {
            let layout = layout_links(links, n);
            for j in 0..n {
                cov[j * n + j] = 1.0;
            }
            for (j, role) in layout.iter().enumerate() {
                if let LinkRole::CopyOf { source, strength } = role {
                    cov[source * n + j] = *strength;
                    cov[j * n + source] = *strength;
                }
            }
        }
        ProcessSpec::ScaledSchedule { .. } => unreachable!("unscaled_of strips the schedule"),
    }

    for i in 0..n {
        for j in 0..n {
            cov[i * n + j] *= scales[i] * scales[j];
        }
    }
    Ok(CovarianceLedger { n, cov })
}

/// Exact `Var(S_N)` without materializing the ledger; available whenever
/// the ledger is, at `O(N * window)` cost for the closed-form variants and
/// `O(N * mixing-time * states^2)` for chains.
pub fn exact_sigma2(spec: &ProcessSpec, n: usize) -> Result<f64> {
    spec.validate(n)?;
    let scales = scales_of(spec, n);
    let inner = unscaled_of(spec);
    match inner {
        ProcessSpec::Iid { base } => {
            let v = base.variance();
            Ok(scales.iter().map(|a| a * a * v).sum())
        }
        ProcessSpec::MDependent {
            base,
            weights,
            post_map,
        } => {
            if !post_map.is_identity() {
                return Err(Error::LedgerUnavailable(
                    "post-mapped moving averages have no closed-form covariance".into(),
                ));
            }
            let lags = ma_lag_covariances(base, weights);
            let w = weights.len() - 1;
            let mut total = 0.0;
            for i in 0..n {
                total += scales[i] * scales[i] * lags[0];
                for lag in 1..=w.min(n - 1 - i) {
                    total += 2.0 * scales[i] * scales[i + lag] * lags[lag];
                }
            }
            Ok(total)
        }
        ProcessSpec::InhomogeneousMarkov { state_values, .. } => {
            let chain = inner.instantiate_chain(n)?;
            let offsets = inner.center_observables(n)?.offsets;
            let marginals = chain.marginals();
            let mut total = 0.0;
            for i in 1..=n {
                let law_i = &marginals[i - 1];
                let h_i: Vec<f64> = state_values.iter().map(|&v| v - offsets[i - 1]).collect();
                total += scales[i - 1]
                    * scales[i - 1]
                    * law_i
                        .iter()
                        .zip(&h_i)
                        .map(|(&p, &h)| p * h * h)
                        .sum::<f64>();
                let mut tilted: Vec<f64> =
                    law_i.iter().zip(&h_i).map(|(&p, &h)| p * h).collect();
                for t in i + 1..=n {
                    tilted = chain.step(t - 1).propagate(&tilted);
                    let c: f64 = tilted
                        .iter()
                        .zip(state_values)
                        .map(|(&v, &h)| v * (h - offsets[t - 1]))
                        .sum();
                    total += 2.0 * scales[i - 1] * scales[t - 1] * c;
                    if tilted.iter().all(|v| v.abs() < MARKOV_TAIL_EPS) {
                        break;
                    }
                }
            }
            Ok(total)
        }
        ProcessSpec::CoupledPairs { links } => {
            let layout = layout_links(links, n);
            let mut total: f64 = scales.iter().map(|a| a * a).sum();
            for (j, role) in layout.iter().enumerate() {
                if let LinkRole::CopyOf { source, strength } = role {
                    total += 2.0 * strength * scales[*source] * scales[j];
                }
            }
            Ok(total)
        }
        ProcessSpec::ScaledSchedule { .. } => unreachable!("unscaled_of strips the schedule"),
    }
}
