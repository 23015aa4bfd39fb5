//! Finite time-inhomogeneous Markov chains with exact enumeration.
//!
//! These chains are the concrete carrier for everything "exact" in the
//! crate: mixing coefficients computed as genuine suprema over events,
//! decoupling expectations evaluated without Monte Carlo error, and
//! covariance ledgers for block constructions.
//!
//! A path of the chain `(x_1, ..., x_N)` is encoded as an integer in base
//! `state_count` with `x_1` as the most significant digit, so blocks of
//! paths sharing a prefix are contiguous.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default cap on the number of path atoms an exact enumeration may visit.
/// Chosen so the exhaustive oracle finishes in seconds on a laptop.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 10_000_000;

const ROW_SUM_TOL: f64 = 1e-12;

/// Row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticMatrix {
    dim: usize,
    rows: Vec<f64>,
}

impl StochasticMatrix {
    /// Validates and wraps a row-major matrix.
    pub fn new(dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || rows.len() != dim * dim {
            return Err(Error::InvalidChain(format!(
                "matrix must be {dim}x{dim}, got {} entries",
                rows.len()
            )));
        }
        for (i, row) in rows.chunks(dim).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidChain(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidChain(format!(
                    "row {i} sums to {sum}, expected 1 within {ROW_SUM_TOL}"
                )));
            }
        }
        Ok(Self { dim, rows })
    }

    /// Builds from per-row slices.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        Self::new(dim, rows.iter().flatten().copied().collect())
    }

    /// Identity matrix (the deterministic copy step).
    pub fn identity(dim: usize) -> Self {
        let mut rows = vec![0.0; dim * dim];
        for i in 0..dim {
            rows[i * dim + i] = 1.0;
        }
        Self { dim, rows }
    }

    /// Matrix with every row equal to `law`.
    pub fn constant_rows(law: &[f64]) -> Result<Self> {
        let dim = law.len();
        Self::new(dim, law.iter().cycle().take(dim * dim).copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `P(to | from)`.
    pub fn at(&self, from: usize, to: usize) -> f64 {
        self.rows[from * self.dim + to]
    }

    /// `self * other` (step composition: first `self`, then `other`).
    pub fn compose(&self, other: &StochasticMatrix) -> StochasticMatrix {
        debug_assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut rows = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.rows[i * d + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    rows[i * d + j] += a * other.rows[k * d + j];
                }
            }
        }
        StochasticMatrix { dim: d, rows }
    }

    /// Pushes a law forward one step: `law * P`.
    pub fn propagate(&self, law: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for (x, &p) in law.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for y in 0..d {
                out[y] += p * self.rows[x * d + y];
            }
        }
        out
    }
}

/// A finite-state, time-inhomogeneous Markov chain over a fixed horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteChainSpec {
    state_count: usize,
    horizon: usize,
    initial_law: Vec<f64>,
    /// One matrix per step; `steps[t]` maps the law at time `t+1` to `t+2`.
    steps: Vec<StochasticMatrix>,
}

impl FiniteChainSpec {
    /// Validates and builds a chain from its initial law and per-step
    /// transition matrices (`steps.len() == horizon - 1`).
    pub fn new(initial_law: Vec<f64>, steps: Vec<StochasticMatrix>) -> Result<Self> {
        let state_count = initial_law.len();
        let horizon = steps.len() + 1;
        let spec = Self {
            state_count,
            horizon,
            initial_law,
            steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Time-homogeneous chain: the same matrix at every step.
    pub fn homogeneous(
        initial_law: Vec<f64>,
        step: StochasticMatrix,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidChain("horizon must be >= 1".into()));
        }
        Self::new(initial_law, vec![step; horizon - 1])
    }

    /// Cycles through `mats` along the horizon (a simple non-stationary
    /// pattern).
    pub fn cyclic(
        initial_law: Vec<f64>,
        mats: Vec<StochasticMatrix>,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidChain("horizon must be >= 1".into()));
        }
        if mats.is_empty() {
            return Err(Error::InvalidChain("cyclic chain needs >= 1 matrix".into()));
        }
        let steps = (0..horizon.saturating_sub(1))
            .map(|t| mats[t % mats.len()].clone())
            .collect();
        Self::new(initial_law, steps)
    }

    /// Re-checks every structural invariant. Used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidChain("horizon must be >= 1".into()));
        }
        if self.state_count == 0 {
            return Err(Error::InvalidChain("state count must be >= 1".into()));
        }
        if self.initial_law.len() != self.state_count {
            return Err(Error::InvalidChain(
                "initial law length must equal state count".into(),
            ));
        }
        if self
            .initial_law
            .iter()
            .any(|&p| !(p >= 0.0) || !p.is_finite())
        {
            return Err(Error::InvalidChain(
                "initial law has a negative or non-finite entry".into(),
            ));
        }
        let sum: f64 = self.initial_law.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidChain(format!(
                "initial law sums to {sum}, expected 1 within {ROW_SUM_TOL}"
            )));
        }
        if self.steps.len() + 1 != self.horizon {
            return Err(Error::InvalidChain(
                "need exactly horizon - 1 transition matrices".into(),
            ));
        }
        if self.steps.iter().any(|m| m.dim != self.state_count) {
            return Err(Error::InvalidChain(
                "transition matrix dimension mismatch".into(),
            ));
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_law(&self) -> &[f64] {
        &self.initial_law
    }

    /// Step matrix from time `t` to `t + 1` (1-based times).
    pub fn step(&self, t: usize) -> &StochasticMatrix {
        &self.steps[t - 1]
    }

    /// Number of path atoms `state_count ^ horizon`, without overflow.
    pub fn atom_count(&self) -> u128 {
        let mut n: u128 = 1;
        for _ in 0..self.horizon {
            n = n.saturating_mul(self.state_count as u128);
        }
        n
    }

    /// Marginal laws of `X_1, ..., X_N` by forward propagation.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.horizon);
        out.push(self.initial_law.clone());
        for step in &self.steps {
            let next = step.propagate(out.last().expect("nonempty"));
            out.push(next);
        }
        out
    }

    /// Product of step matrices carrying time `from` to time `to`
    /// (1-based, `from < to`).
    pub fn step_product(&self, from: usize, to: usize) -> StochasticMatrix {
        debug_assert!(1 <= from && from < to && to <= self.horizon);
        let mut m = self.steps[from - 1].clone();
        for t in from + 1..to {
            m = m.compose(&self.steps[t - 1]);
        }
        m
    }

    /// Exact probabilities of every path, indexed by base-`state_count`
    /// code with `x_1` most significant. Errors if the atom count exceeds
    /// `budget`.
    pub fn path_law(&self, budget: u128) -> Result<Vec<f64>> {
        let atoms = self.atom_count();
        if atoms > budget {
            return Err(Error::BudgetExceeded { atoms, budget });
        }
        let n_paths = atoms as usize;
        let s = self.state_count;
        let mut probs = vec![0.0; n_paths];
        // Grow prefix probabilities one coordinate at a time; prefixes of
        // length t occupy codes [0, s^t).
        probs[..s].copy_from_slice(&self.initial_law);
        let mut len = s;
        for step in &self.steps {
            for prefix in (0..len).rev() {
                let p = probs[prefix];
                for next in (0..s).rev() {
                    probs[prefix * s + next] = if p == 0.0 { 0.0 } else { p * step.at(prefix % s, next) };
                }
            }
            len *= s;
        }
        Ok(probs)
    }
}

impl FiniteChainSpec {
    /// Draws one path with the supplied RNG (inverse-CDF at each step).
    pub fn sample_path(&self, rng: &mut impl rand::Rng, out: &mut Vec<usize>) {
        out.clear();
        let mut state = sample_discrete(&self.initial_law, rng.gen::<f64>());
        out.push(state);
        for step in &self.steps {
            let u: f64 = rng.gen();
            let row: Vec<f64> = (0..self.state_count).map(|y| step.at(state, y)).collect();
            state = sample_discrete(&row, u);
            out.push(state);
        }
    }

    /// Exact `Cov(h_i(X_i), h_j(X_j))` for `i < j` via joint-law
    /// propagation, plus the two means.
    pub fn pair_covariance(&self, i: usize, j: usize, h_i: &[f64], h_j: &[f64]) -> (f64, f64, f64) {
        debug_assert!(1 <= i && i < j && j <= self.horizon);
        let marginals = self.marginals();
        let law_i = &marginals[i - 1];
        let law_j = &marginals[j - 1];
        let reach = self.step_product(i, j);
        let mean_i: f64 = law_i.iter().zip(h_i).map(|(&p, &h)| p * h).sum();
        let mean_j: f64 = law_j.iter().zip(h_j).map(|(&p, &h)| p * h).sum();
        let mut cross = 0.0;
        for (x, &px) in law_i.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for (y, &hy) in h_j.iter().enumerate() {
                cross += px * reach.at(x, y) * h_i[x] * hy;
            }
        }
        (cross - mean_i * mean_j, mean_i, mean_j)
    }

    /// Exact `E[|h(X_t)|^k]` at time `t` (1-based).
    pub fn abs_moment(&self, t: usize, h: &[f64], k: f64) -> f64 {
        let marginals = self.marginals();
        marginals[t - 1]
            .iter()
            .zip(h)
            .map(|(&p, &v)| p * v.abs().powf(k))
            .sum()
    }

    /// Exact mean of `h(X_t)` at time `t` (1-based).
    pub fn mean_observable(&self, t: usize, h: &[f64]) -> f64 {
        let marginals = self.marginals();
        marginals[t - 1].iter().zip(h).map(|(&p, &v)| p * v).sum()
    }
}

fn sample_discrete(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Joint law of the past block `sigma[1, k]` and future block
/// `sigma[k + m, N]`, with the coordinates in between marginalized out.
///
/// Rows are past atoms (codes over `k` digits), columns future atoms
/// (codes over `N - k - m + 1` digits).
#[derive(Debug, Clone)]
pub struct PastFutureJoint {
    pub k: usize,
    pub m: usize,
    pub past_atoms: usize,
    pub future_atoms: usize,
    /// Row-major `past_atoms x future_atoms` joint probabilities.
    pub joint: Vec<f64>,
    pub past_marginal: Vec<f64>,
    pub future_marginal: Vec<f64>,
}

impl PastFutureJoint {
    /// Builds the joint by summing the full path law over the middle block.
    pub fn build(chain: &FiniteChainSpec, k: usize, m: usize, budget: u128) -> Result<Self> {
        let n = chain.horizon();
        if k == 0 || m == 0 || k + m > n {
            return Err(Error::InvalidChain(format!(
                "need 1 <= k and k + m <= horizon; got k={k}, m={m}, horizon={n}"
            )));
        }
        let s = chain.state_count();
        let probs = chain.path_law(budget)?;
        let past_atoms = s.pow(k as u32);
        let future_len = n - (k + m) + 1;
        let future_atoms = s.pow(future_len as u32);
        let suffix_len = n - k; // digits after the past block
        let suffix_atoms = s.pow(suffix_len as u32);

        let mut joint = vec![0.0; past_atoms * future_atoms];
        for (code, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let u = code / suffix_atoms;
            let v = code % future_atoms;
            joint[u * future_atoms + v] += p;
        }
        let mut past_marginal = vec![0.0; past_atoms];
        let mut future_marginal = vec![0.0; future_atoms];
        for u in 0..past_atoms {
            for v in 0..future_atoms {
                let p = joint[u * future_atoms + v];
                past_marginal[u] += p;
                future_marginal[v] += p;
            }
        }
        Ok(Self {
            k,
            m,
            past_atoms,
            future_atoms,
            joint,
            past_marginal,
            future_marginal,
        })
    }

    /// `E[nu(f(past), g(future))]` under the joint law.
    pub fn expect_joint(&self, f: &[f64], g: &[f64], nu: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for u in 0..self.past_atoms {
            for v in 0..self.future_atoms {
                let p = self.joint[u * self.future_atoms + v];
                if p != 0.0 {
                    acc += p * nu(f[u], g[v]);
                }
            }
        }
        acc
    }

    /// `E[nu(f(past), g(future_hat))]` where the future copy is independent
    /// of the past with the same marginal law.
    pub fn expect_decoupled(&self, f: &[f64], g: &[f64], nu: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for u in 0..self.past_atoms {
            let pu = self.past_marginal[u];
            if pu == 0.0 {
                continue;
            }
            for v in 0..self.future_atoms {
                let qv = self.future_marginal[v];
                if qv != 0.0 {
                    acc += pu * qv * nu(f[u], g[v]);
                }
            }
        }
        acc
    }
}

/// Exact phi-mixing coefficient by event enumeration.
///
/// For each admissible split `k`, the supremum over conditioning events
/// `A` in `sigma[1, k]` with `P(A) > 0` is attained at a single past atom
/// (conditional probabilities over unions are convex combinations), and
/// for a fixed atom the supremum over `B` collects exactly the future
/// atoms whose conditional probability exceeds the unconditional one, which
/// is the total variation distance between the conditional and
/// unconditional future laws. Zero-probability pasts are skipped, matching
/// the convention that conditional probability is undefined there.
pub fn phi_exact_enumerated(chain: &FiniteChainSpec, m: usize, budget: u128) -> Result<f64> {
    if m == 0 || m >= chain.horizon() {
        return Err(Error::InvalidChain(format!(
            "need 1 <= m < horizon; got m={m}, horizon={}",
            chain.horizon()
        )));
    }
    let atoms = chain.atom_count();
    if atoms > budget {
        return Err(Error::BudgetExceeded { atoms, budget });
    }
    let n = chain.horizon();
    let mut sup = 0.0f64;
    for k in 1..=n - m {
        let joint = PastFutureJoint::build(chain, k, m, budget)?;
        for u in 0..joint.past_atoms {
            let pu = joint.past_marginal[u];
            if pu <= 0.0 {
                continue;
            }
            let mut tv = 0.0;
            for v in 0..joint.future_atoms {
                let cond = joint.joint[u * joint.future_atoms + v] / pu;
                tv += (cond - joint.future_marginal[v]).abs();
            }
            sup = sup.max(0.5 * tv);
        }
    }
    Ok(sup.min(1.0))
}

/// Phi-mixing coefficient via the Markov reduction, polynomial in the
/// state count and horizon.
///
/// Conditioning on a past atom is conditioning on `X_k`, and because the
/// conditional and unconditional future laws share all transition kernels
/// after time `k + m`, their total variation distance collapses to the
/// distance between the two laws of `X_{k+m}` alone.
pub fn phi_markov_reduced(chain: &FiniteChainSpec, m: usize) -> Result<f64> {
    if m == 0 || m >= chain.horizon() {
        return Err(Error::InvalidChain(format!(
            "need 1 <= m < horizon; got m={m}, horizon={}",
            chain.horizon()
        )));
    }
    let n = chain.horizon();
    let marginals = chain.marginals();
    let mut sup = 0.0f64;
    for k in 1..=n - m {
        let reach = chain.step_product(k, k + m);
        let target = &marginals[k + m - 1];
        for (x, &px) in marginals[k - 1].iter().enumerate() {
            if px <= 0.0 {
                continue;
            }
            let tv: f64 = (0..chain.state_count())
                .map(|y| (reach.at(x, y) - target[y]).abs())
                .sum();
            sup = sup.max(0.5 * tv);
        }
    }
    Ok(sup.min(1.0))
}

/// Exact alpha-mixing coefficient.
///
/// The optimal conditioning event is a union of past atoms; by the Markov
/// property its effect enters only through the mass it places on each value
/// of `X_k`, and the objective is convex in those masses, so the supremum
/// is attained at `A = {X_k in X0}` for some state subset `X0`. For fixed
/// `A` the optimal `B` collects future atoms with positive signed mass,
/// which again collapses to the first future coordinate.
pub fn alpha_exact_enumerated(chain: &FiniteChainSpec, m: usize) -> Result<f64> {
    if m == 0 || m >= chain.horizon() {
        return Err(Error::InvalidChain(format!(
            "need 1 <= m < horizon; got m={m}, horizon={}",
            chain.horizon()
        )));
    }
    let n = chain.horizon();
    let s = chain.state_count();
    let marginals = chain.marginals();
    let mut sup = 0.0f64;
    for k in 1..=n - m {
        let reach = chain.step_product(k, k + m);
        let target = &marginals[k + m - 1];
        let law_k = &marginals[k - 1];
        for subset in 1u32..(1 << s) {
            let mut val = 0.0;
            for y in 0..s {
                let mut signed = 0.0;
                for x in 0..s {
                    if subset & (1 << x) != 0 {
                        signed += law_k[x] * (reach.at(x, y) - target[y]);
                    }
                }
                if signed > 0.0 {
                    val += signed;
                }
            }
            sup = sup.max(val);
        }
    }
    Ok(sup.min(1.0))
}

/// Exact expectation of a product of interval observables
/// `Y_j = f_j(X_{a_j}, ..., X_{b_j})`, plus the individual expectations.
///
/// `intervals` are disjoint, increasing, 1-based inclusive `(a, b)` pairs;
/// `f` values are indexed by the local base-`state_count` code of the
/// interval's digits.
pub fn expect_interval_product(
    chain: &FiniteChainSpec,
    intervals: &[(usize, usize)],
    fs: &[Vec<f64>],
    budget: u128,
) -> Result<(f64, Vec<f64>)> {
    let n = chain.horizon();
    if intervals.len() != fs.len() || intervals.is_empty() {
        return Err(Error::InvalidChain(
            "need one observable per interval".into(),
        ));
    }
    let mut prev_end = 0usize;
    for &(a, b) in intervals {
        if a == 0 || a > b || b > n || a <= prev_end {
            return Err(Error::InvalidChain(format!(
                "bad interval ({a}, {b}) for horizon {n}"
            )));
        }
        prev_end = b;
    }
    let s = chain.state_count();
    let probs = chain.path_law(budget)?;
    let mut product_mean = 0.0;
    let mut means = vec![0.0; fs.len()];
    // Per-interval extraction: digits a..b of code are
    // (code / s^(n-b)) % s^(b-a+1).
    let extract: Vec<(usize, usize)> = intervals
        .iter()
        .map(|&(a, b)| (s.pow((n - b) as u32), s.pow((b - a + 1) as u32)))
        .collect();
    for (code, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut prod = 1.0;
        for (j, &(div, modu)) in extract.iter().enumerate() {
            let local = (code / div) % modu;
            let y = fs[j][local];
            means[j] += p * y;
            prod *= y;
        }
        product_mean += p * prod;
    }
    Ok((product_mean, means))
}
