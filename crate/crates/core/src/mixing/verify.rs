//! Enumeration-backed verification of the dependence inequalities.
//!
//! Every check here is exact arithmetic over tiny finite chains: mixing
//! coefficients are genuine suprema over events, and expectations are full
//! sums over path atoms, so an inequality failure is a real failure and not
//! Monte Carlo noise.
//!
//! Two constants deserve a note. For products of *same-sign* bounded
//! factors (and for indicator events) the decoupling bound `D * phi(m)`
//! holds as printed; for signed factors the classical constant is
//! `2 * D * phi(m)` and it is attained — a two-state copy chain with `+-1`
//! observables reaches it exactly — so the signed stress check asserts
//! against the doubled constant. The product bound uses `A = 4`, the sharp
//! pairwise constant (`4 * alpha = 1` on the copy chain with `+-1`
//! factors).

use super::chain::{
    alpha_exact_enumerated, expect_interval_product, phi_exact_enumerated, phi_markov_reduced,
    FiniteChainSpec, PastFutureJoint, StochasticMatrix,
};
use super::{product_lemma_bound, rio_covariance_bound, PRODUCT_LEMMA_CONSTANT};
use crate::rng::path_stream;
use crate::Result;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tolerance granted to exact-arithmetic inequality checks.
pub const EXACT_TOL: f64 = 1e-10;

/// Options for the lemma suites.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaSuiteOptions {
    /// Number of randomized chains in the corpus.
    pub chains: usize,
    /// Seed for corpus and observable draws.
    pub seed: u64,
    /// Enumeration budget in path atoms.
    pub budget: u128,
    /// Largest state count for random chains (2 or 3).
    pub max_states: usize,
    /// Largest horizon for random chains.
    pub max_horizon: usize,
    /// Monte Carlo paths for the sampled Rio check (0 disables it).
    pub mc_paths: usize,
    /// Diagnostic multiplier applied to every mixing coefficient before it
    /// enters a bound. Values below 1 simulate a faulty certificate and
    /// must trip the detector (self-test of the violation machinery).
    pub coefficient_scale: f64,
}

impl Default for LemmaSuiteOptions {
    fn default() -> Self {
        Self {
            chains: 200,
            seed: 0x5eed_cafe,
            budget: super::DEFAULT_ENUMERATION_BUDGET,
            max_states: 3,
            max_horizon: 8,
            mc_paths: 20_000,
            coefficient_scale: 1.0,
        }
    }
}

/// A single inequality failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub suite: String,
    pub chain_index: usize,
    pub detail: String,
    pub lhs: f64,
    pub rhs: f64,
}

/// Per-suite check counters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChecksSummary {
    pub phi_agreement: usize,
    pub phi_monotone: usize,
    pub decoupling_same_sign: usize,
    pub decoupling_signed: usize,
    pub product_lemma: usize,
    pub rio_exact: usize,
    pub rio_monte_carlo: usize,
}

impl ChecksSummary {
    pub fn total(&self) -> usize {
        self.phi_agreement
            + self.phi_monotone
            + self.decoupling_same_sign
            + self.decoupling_signed
            + self.product_lemma
            + self.rio_exact
            + self.rio_monte_carlo
    }
}

/// Aggregate outcome of the lemma suites.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaReport {
    pub chains_checked: usize,
    pub checks: ChecksSummary,
    pub violations: Vec<Violation>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Draws a random row-stochastic matrix; `sharpness > 1` pushes rows
/// toward determinism.
fn random_matrix(s: usize, rng: &mut impl Rng, sharpness: f64) -> StochasticMatrix {
    let mut rows = Vec::with_capacity(s * s);
    for _ in 0..s {
        let mut row: Vec<f64> = (0..s).map(|_| rng.gen::<f64>().powf(sharpness)).collect();
        let sum: f64 = row.iter().sum();
        if sum <= 0.0 {
            row = vec![1.0 / s as f64; s];
        } else {
            for v in &mut row {
                *v /= sum;
            }
        }
        rows.extend(row);
    }
    StochasticMatrix::new(s, rows).expect("normalized rows")
}

fn random_law(s: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut law: Vec<f64> = (0..s).map(|_| 0.05 + rng.gen::<f64>()).collect();
    let sum: f64 = law.iter().sum();
    for v in &mut law {
        *v /= sum;
    }
    law
}

/// The randomized corpus, with a few structured chains mixed in so that
/// near-extremal dependence (copy chains) and exact independence both
/// occur.
pub fn chain_corpus(opts: &LemmaSuiteOptions) -> Vec<FiniteChainSpec> {
    let mut rng = path_stream(opts.seed, 0);
    let mut corpus = Vec::with_capacity(opts.chains + 4);
    corpus.push(
        FiniteChainSpec::homogeneous(vec![0.5, 0.5], StochasticMatrix::identity(2), 5).unwrap(),
    );
    corpus.push(
        FiniteChainSpec::homogeneous(vec![0.3, 0.7], StochasticMatrix::identity(2), 4).unwrap(),
    );
    corpus.push(
        FiniteChainSpec::homogeneous(
            vec![0.5, 0.5],
            StochasticMatrix::constant_rows(&[0.5, 0.5]).unwrap(),
            6,
        )
        .unwrap(),
    );
    corpus.push(
        FiniteChainSpec::homogeneous(
            vec![1.0, 0.0, 0.0],
            StochasticMatrix::from_rows(&[
                vec![0.6, 0.2, 0.2],
                vec![0.2, 0.4, 0.4],
                vec![0.2, 0.2, 0.6],
            ])
            .unwrap(),
            6,
        )
        .unwrap(),
    );
    for _ in 0..opts.chains {
        let s = 2 + (rng.gen::<u32>() as usize) % (opts.max_states - 1).max(1);
        let horizon =
            4 + (rng.gen::<u32>() as usize) % (opts.max_horizon.saturating_sub(3)).max(1);
        let sharpness = if rng.gen::<f64>() < 0.25 { 6.0 } else { 1.0 };
        let steps = (0..horizon - 1)
            .map(|_| random_matrix(s, &mut rng, sharpness))
            .collect();
        corpus.push(FiniteChainSpec::new(random_law(s, &mut rng), steps).expect("valid"));
    }
    corpus
}

/// Alternating sign ascent for the extremal signed product gap
/// `max |E[f g] - E[f] E[g]|` over `|f| <= 1`, `|g| <= 1`. A lower bound
/// on the supremum, which is all an inequality check needs.
fn extremal_signed_gap(joint: &PastFutureJoint, rng: &mut impl Rng) -> f64 {
    let pa = joint.past_atoms;
    let fa = joint.future_atoms;
    let c: Vec<f64> = (0..pa * fa)
        .map(|i| {
            let (u, v) = (i / fa, i % fa);
            joint.joint[i] - joint.past_marginal[u] * joint.future_marginal[v]
        })
        .collect();
    let mut best = 0.0f64;
    for _ in 0..3 {
        let mut g: Vec<f64> = (0..fa)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mut f = vec![1.0; pa];
        for _ in 0..8 {
            for (u, fu) in f.iter_mut().enumerate() {
                let s: f64 = (0..fa).map(|v| c[u * fa + v] * g[v]).sum();
                *fu = if s >= 0.0 { 1.0 } else { -1.0 };
            }
            for (v, gv) in g.iter_mut().enumerate() {
                let s: f64 = (0..pa).map(|u| c[u * fa + v] * f[u]).sum();
                *gv = if s >= 0.0 { 1.0 } else { -1.0 };
            }
        }
        let gap: f64 = (0..pa)
            .map(|u| (0..fa).map(|v| c[u * fa + v] * f[u] * g[v]).sum::<f64>())
            .sum();
        best = best.max(gap.abs());
    }
    best
}

/// Runs every suite over the corpus and collects violations.
pub fn run_lemma_suites(opts: &LemmaSuiteOptions) -> Result<LemmaReport> {
    let corpus = chain_corpus(opts);
    let mut rng = path_stream(opts.seed, 1);
    let mut violations = Vec::new();
    let mut checks = ChecksSummary::default();
    let scale = opts.coefficient_scale;

    for (ci, chain) in corpus.iter().enumerate() {
        let n = chain.horizon();
        let marginals = chain.marginals();

        let mut phi = vec![0.0; n];
        let mut alpha = vec![0.0; n];
        for m in 1..n {
            phi[m] = phi_exact_enumerated(chain, m, opts.budget)?;
            alpha[m] = alpha_exact_enumerated(chain, m)?;
        }

        // Suite: Markov reduction agrees with event enumeration.
        for m in 1..n {
            let reduced = phi_markov_reduced(chain, m)?;
            checks.phi_agreement += 1;
            if (reduced - phi[m]).abs() > EXACT_TOL {
                violations.push(Violation {
                    suite: "phi_agreement".into(),
                    chain_index: ci,
                    detail: format!("m={m}"),
                    lhs: reduced,
                    rhs: phi[m],
                });
            }
        }

        // Suite: monotonicity of the exact profile.
        for m in 1..n - 1 {
            checks.phi_monotone += 1;
            if phi[m + 1] > phi[m] + EXACT_TOL {
                violations.push(Violation {
                    suite: "phi_monotone".into(),
                    chain_index: ci,
                    detail: format!("m={m}"),
                    lhs: phi[m + 1],
                    rhs: phi[m],
                });
            }
        }

        // Suite: decoupling inequality at every admissible cut.
        for k in 1..n {
            for m in 1..=n - k {
                let joint = PastFutureJoint::build(chain, k, m, opts.budget)?;

                // Same-sign factors: D * phi as printed.
                let c1 = 0.2 + 0.8 * rng.gen::<f64>();
                let c2 = 0.2 + 0.8 * rng.gen::<f64>();
                let f: Vec<f64> =
                    (0..joint.past_atoms).map(|_| c1 * rng.gen::<f64>()).collect();
                let g: Vec<f64> = (0..joint.future_atoms)
                    .map(|_| c2 * rng.gen::<f64>())
                    .collect();
                let d = f.iter().cloned().fold(0.0, f64::max)
                    * g.iter().cloned().fold(0.0, f64::max);
                let lhs = (joint.expect_joint(&f, &g, |a, b| a * b)
                    - joint.expect_decoupled(&f, &g, |a, b| a * b))
                .abs();
                checks.decoupling_same_sign += 1;
                if lhs > d * (phi[m] * scale) + EXACT_TOL {
                    violations.push(Violation {
                        suite: "decoupling_same_sign".into(),
                        chain_index: ci,
                        detail: format!("k={k}, m={m}, [0,C]-valued factors"),
                        lhs,
                        rhs: d * (phi[m] * scale) + EXACT_TOL,
                    });
                }

                // Indicator events: |P(AB) - P(A)P(B)| <= phi directly.
                let fi: Vec<f64> = (0..joint.past_atoms)
                    .map(|_| if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 })
                    .collect();
                let gi: Vec<f64> = (0..joint.future_atoms)
                    .map(|_| if rng.gen::<f64>() < 0.5 { 1.0 } else { 0.0 })
                    .collect();
                let lhs_ind = (joint.expect_joint(&fi, &gi, |a, b| a * b)
                    - joint.expect_decoupled(&fi, &gi, |a, b| a * b))
                .abs();
                checks.decoupling_same_sign += 1;
                if lhs_ind > phi[m] * scale + EXACT_TOL {
                    violations.push(Violation {
                        suite: "decoupling_same_sign".into(),
                        chain_index: ci,
                        detail: format!("k={k}, m={m}, indicator events"),
                        lhs: lhs_ind,
                        rhs: phi[m] * scale + EXACT_TOL,
                    });
                }

                // Signed stress against the classical doubled constant;
                // the ascent is the expensive part, so sample it.
                if (k + m * 3 + ci) % 4 == 0 {
                    let lhs_signed = extremal_signed_gap(&joint, &mut rng);
                    checks.decoupling_signed += 1;
                    if lhs_signed > 2.0 * (phi[m] * scale) + EXACT_TOL {
                        violations.push(Violation {
                            suite: "decoupling_signed".into(),
                            chain_index: ci,
                            detail: format!("k={k}, m={m}, extremal signed factors"),
                            lhs: lhs_signed,
                            rhs: 2.0 * (phi[m] * scale) + EXACT_TOL,
                        });
                    }
                }
            }
        }

        // Suite: product bound with A = 4 for d in {2, 3}.
        for &d_count in &[2usize, 3] {
            let m_gap = 1usize;
            // Unit-length intervals at 1, 3, 5, ...; separation m_gap + 1
            // puts consecutive intervals a distance > m_gap apart.
            let last_start = 1 + (d_count - 1) * (m_gap + 1);
            if last_start > n {
                continue;
            }
            let intervals: Vec<(usize, usize)> = (0..d_count)
                .map(|j| {
                    let a = 1 + j * (m_gap + 1);
                    (a, a)
                })
                .collect();
            let s = chain.state_count();
            let mut fs = Vec::new();
            let mut sup_norms = Vec::new();
            for _ in &intervals {
                let cj = 0.3 + 0.7 * rng.gen::<f64>();
                let f: Vec<f64> = (0..s).map(|_| cj * (2.0 * rng.gen::<f64>() - 1.0)).collect();
                sup_norms.push(f.iter().fold(0.0f64, |acc, v| acc.max(v.abs())));
                fs.push(f);
            }
            let (prod_mean, means) = expect_interval_product(chain, &intervals, &fs, opts.budget)?;
            let lhs = (prod_mean - means.iter().product::<f64>()).abs();
            let rhs =
                product_lemma_bound(&sup_norms, alpha[m_gap] * scale, PRODUCT_LEMMA_CONSTANT)
                    + EXACT_TOL;
            checks.product_lemma += 1;
            if lhs > rhs {
                violations.push(Violation {
                    suite: "product_lemma".into(),
                    chain_index: ci,
                    detail: format!("d={d_count}, intervals {intervals:?}"),
                    lhs,
                    rhs,
                });
            }
        }

        // Suite: Rio covariance bound on exact ledgers, with an MC replay
        // on a thinned subset.
        let s = chain.state_count();
        for rep in 0..3 {
            let i = 1 + (rng.gen::<u32>() as usize) % (n - 1);
            let j = i + 1 + (rng.gen::<u32>() as usize) % (n - i);
            if j > n {
                continue;
            }
            let mut h_i: Vec<f64> = (0..s).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
            let mut h_j: Vec<f64> = (0..s).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
            let mean_i: f64 = marginals[i - 1].iter().zip(&h_i).map(|(&p, &h)| p * h).sum();
            let mean_j: f64 = marginals[j - 1].iter().zip(&h_j).map(|(&p, &h)| p * h).sum();
            for v in &mut h_i {
                *v -= mean_i;
            }
            for v in &mut h_j {
                *v -= mean_j;
            }
            let (cov, _, _) = chain.pair_covariance(i, j, &h_i, &h_j);
            let rho = chain
                .abs_moment(i, &h_i, 3.0)
                .max(chain.abs_moment(j, &h_j, 3.0));
            let lag = j - i;
            let rhs = rio_covariance_bound(rho, alpha[lag] * scale) + EXACT_TOL;
            checks.rio_exact += 1;
            if cov.abs() > rhs {
                violations.push(Violation {
                    suite: "rio_exact".into(),
                    chain_index: ci,
                    detail: format!("i={i}, j={j}"),
                    lhs: cov.abs(),
                    rhs,
                });
            }

            if opts.mc_paths > 0 && ci % 20 == 0 && rep == 0 {
                let mut mc_rng =
                    path_stream(opts.seed ^ 0x4d43_7269_6f00_0000, (ci * 31 + i * 7 + j) as u64);
                let mut path = Vec::new();
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for _ in 0..opts.mc_paths {
                    chain.sample_path(&mut mc_rng, &mut path);
                    let prod = h_i[path[i - 1]] * h_j[path[j - 1]];
                    sum += prod;
                    sum_sq += prod * prod;
                }
                let npaths = opts.mc_paths as f64;
                let cov_hat = sum / npaths;
                let var = (sum_sq / npaths - cov_hat * cov_hat).max(0.0);
                let se = (var / npaths).sqrt();
                checks.rio_monte_carlo += 1;
                if cov_hat.abs() - 3.0 * se > rhs {
                    violations.push(Violation {
                        suite: "rio_monte_carlo".into(),
                        chain_index: ci,
                        detail: format!("i={i}, j={j}, se={se:.3e}"),
                        lhs: cov_hat.abs() - 3.0 * se,
                        rhs,
                    });
                }
            }
        }
    }

    Ok(LemmaReport {
        chains_checked: corpus.len(),
        checks,
        violations,
    })
}
