//! Non-stationary weakly dependent sample-path generators with certified
//! mixing profiles.
//!
//! Every variant generates observations that are centered by construction,
//! and every variant can state an exact phi profile (zero beyond the window
//! for moving averages, Markov-reduced values for finite chains, pair
//! coupling strengths for the polynomial-mixing construction). Paths are
//! deterministic functions of `(spec, N, path index, root seed)`.

mod covariance;

pub use covariance::{exact_cov, exact_sigma2, CovarianceLedger, DEFAULT_LEDGER_ENTRY_BUDGET};

use crate::mixing::{DecayModel, Exactness, FiniteChainSpec, MixingProfile, StochasticMatrix};
use crate::rng::{path_stream, SeedLineage};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Paths processed per parallel work item. Fixed so that reductions merge
/// in a schedule-independent order.
pub const PATH_CHUNK: usize = 512;

/// Guard on materialized batches; the engine streams instead of holding
/// a full grid point in memory.
const MAX_BATCH_ENTRIES: usize = 1 << 26;

/// Centered base distributions for i.i.d. innovations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum BaseDist {
    /// Standard normal.
    Normal,
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Fair signs `+-1`.
    Rademacher,
    /// `B - p` for a Bernoulli(`p`) variable; strongly skewed for small `p`.
    BernoulliCentered { p: f64 },
}

impl BaseDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            BaseDist::Uniform { half_width } if !(half_width.is_finite() && *half_width > 0.0) => {
                Err(Error::InvalidProcess("uniform half_width must be > 0".into()))
            }
            BaseDist::BernoulliCentered { p } if !(0.0 < *p && *p < 1.0) => {
                Err(Error::InvalidProcess("bernoulli p must be in (0, 1)".into()))
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            BaseDist::Normal => StandardNormal.sample(rng),
            BaseDist::Uniform { half_width } => (2.0 * rng.gen::<f64>() - 1.0) * half_width,
            BaseDist::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            BaseDist::BernoulliCentered { p } => {
                if rng.gen::<f64>() < *p {
                    1.0 - p
                } else {
                    -p
                }
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            BaseDist::Normal => 1.0,
            BaseDist::Uniform { half_width } => half_width * half_width / 3.0,
            BaseDist::Rademacher => 1.0,
            BaseDist::BernoulliCentered { p } => p * (1.0 - p),
        }
    }

    /// Exact `E|X|^3`.
    pub fn abs_moment3(&self) -> f64 {
        match self {
            BaseDist::Normal => 2.0 * (2.0 / std::f64::consts::PI).sqrt(),
            BaseDist::Uniform { half_width } => half_width.powi(3) / 4.0,
            BaseDist::Rademacher => 1.0,
            BaseDist::BernoulliCentered { p } => {
                let q = 1.0 - p;
                p * q * (q * q + p * p)
            }
        }
    }

    /// Whether the law is symmetric about zero.
    pub fn symmetric(&self) -> bool {
        !matches!(self, BaseDist::BernoulliCentered { .. })
    }
}

/// Pointwise map applied after the moving-average stage. Odd maps keep
/// symmetric inputs centered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum PostMap {
    Identity,
    /// `tanh(gain * x)`: bounded odd nonlinearity.
    Tanh { gain: f64 },
    /// `x^3`.
    Cube,
}

impl PostMap {
    fn apply(&self, x: f64) -> f64 {
        match self {
            PostMap::Identity => x,
            PostMap::Tanh { gain } => (gain * x).tanh(),
            PostMap::Cube => x * x * x,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, PostMap::Identity)
    }
}

/// Deterministic per-index scale `a_j`, the non-stationarity source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleSchedule {
    Constant { value: f64 },
    /// `a_j = intercept + slope * j / N`.
    Affine { intercept: f64, slope: f64 },
    /// Explicit values, one per index (must match the horizon).
    Explicit { values: Vec<f64> },
}

impl ScaleSchedule {
    /// Scale at index `j` (1-based) for horizon `n`.
    pub fn at(&self, j: usize, n: usize) -> f64 {
        match self {
            ScaleSchedule::Constant { value } => *value,
            ScaleSchedule::Affine { intercept, slope } => {
                intercept + slope * j as f64 / n as f64
            }
            ScaleSchedule::Explicit { values } => values[j - 1],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            ScaleSchedule::Explicit { values } if values.len() != n => {
                Err(Error::InvalidProcess(format!(
                    "explicit schedule has {} values for horizon {n}",
                    values.len()
                )))
            }
            _ => {
                for j in 1..=n {
                    let a = self.at(j, n);
                    if !a.is_finite() || a == 0.0 {
                        return Err(Error::InvalidProcess(format!(
                            "scale at index {j} is {a}; must be finite and nonzero"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// One coupled pair in the polynomial-mixing construction: the value at
/// `pos + lag` copies the value at `pos` with probability `strength`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairLink {
    pub lag: u32,
    pub strength: f64,
}

/// Process specifications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    /// Independent observations.
    Iid { base: BaseDist },
    /// Moving average of window `weights.len() - 1` over i.i.d.
    /// innovations, optionally post-mapped: exactly m-dependent.
    MDependent {
        base: BaseDist,
        weights: Vec<f64>,
        #[serde(default = "default_post_map")]
        post_map: PostMap,
    },
    /// Observable of a finite time-inhomogeneous Markov chain. The step
    /// matrices cycle along the horizon; the observable is centered
    /// exactly via marginal propagation.
    InhomogeneousMarkov {
        initial_law: Vec<f64>,
        step_matrices: Vec<StochasticMatrix>,
        /// Raw observable value per state (centering is applied per index).
        state_values: Vec<f64>,
    },
    /// Sign process with sparse deterministic pair couplings whose exact
    /// phi profile decays polynomially; see [`polynomial_mixing_schedule`].
    CoupledPairs { links: Vec<PairLink> },
    /// Deterministic per-index rescaling of an inner process.
    ScaledSchedule {
        inner: Box<ProcessSpec>,
        schedule: ScaleSchedule,
    },
}

fn default_post_map() -> PostMap {
    PostMap::Identity
}

impl ProcessSpec {
    /// Validates the spec for a given horizon.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidProcess("horizon must be >= 1".into()));
        }
        match self {
            ProcessSpec::Iid { base } => base.validate(),
            ProcessSpec::MDependent {
                base,
                weights,
                post_map,
            } => {
                base.validate()?;
                if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::InvalidProcess(
                        "moving-average weights must be nonempty and finite".into(),
                    ));
                }
                if !post_map.is_identity() && !base.symmetric() {
                    return Err(Error::InvalidProcess(
                        "nonlinear post map requires a symmetric base so centering stays exact"
                            .into(),
                    ));
                }
                Ok(())
            }
            ProcessSpec::InhomogeneousMarkov {
                initial_law,
                step_matrices,
                state_values,
            } => {
                if step_matrices.is_empty() {
                    return Err(Error::InvalidProcess("need >= 1 step matrix".into()));
                }
                let s = initial_law.len();
                if state_values.len() != s || step_matrices.iter().any(|m| m.dim() != s) {
                    return Err(Error::InvalidProcess(
                        "state_values / matrices dimension mismatch".into(),
                    ));
                }
                // Chain validation covers the law and rows.
                self.instantiate_chain(n.max(2))?;
                Ok(())
            }
            ProcessSpec::CoupledPairs { links } => {
                if links.is_empty() {
                    return Err(Error::InvalidProcess("need >= 1 pair link".into()));
                }
                for link in links {
                    if link.lag == 0 || !(0.0..=1.0).contains(&link.strength) {
                        return Err(Error::InvalidProcess(format!(
                            "bad link (lag {}, strength {})",
                            link.lag, link.strength
                        )));
                    }
                }
                Ok(())
            }
            ProcessSpec::ScaledSchedule { inner, schedule } => {
                schedule.validate(n)?;
                inner.validate(n)
            }
        }
    }

    /// Builds the concrete chain for the Markov variant at horizon `n`.
    pub(crate) fn instantiate_chain(&self, n: usize) -> Result<FiniteChainSpec> {
        match self {
            ProcessSpec::InhomogeneousMarkov {
                initial_law,
                step_matrices,
                ..
            } => FiniteChainSpec::cyclic(initial_law.clone(), step_matrices.clone(), n),
            _ => Err(Error::InvalidProcess("not a Markov process".into())),
        }
    }

    /// The certified exact phi profile at horizon `n`, over lags
    /// `1..=max_lag`.
    pub fn certified_phi_profile(&self, n: usize, max_lag: u32) -> Result<MixingProfile> {
        let max_lag = max_lag.min(n.saturating_sub(1) as u32).max(1);
        match self {
            ProcessSpec::Iid { .. } => MixingProfile::from_pairs(
                (1..=max_lag).map(|m| (m, 0.0)),
                Exactness::ExactByConstruction,
                None,
            ),
            ProcessSpec::MDependent { weights, .. } => {
                let window = (weights.len() - 1) as u32;
                MixingProfile::from_pairs(
                    (1..=max_lag).map(|m| (m, if m > window { 0.0 } else { 1.0 })),
                    Exactness::ExactByConstruction,
                    None,
                )
            }
            ProcessSpec::InhomogeneousMarkov { .. } => {
                let chain = self.instantiate_chain(n)?;
                let pairs: Result<Vec<(u32, f64)>> = (1..=max_lag)
                    .map(|m| {
                        crate::mixing::phi_markov_reduced(&chain, m as usize).map(|v| (m, v))
                    })
                    .collect();
                MixingProfile::from_pairs(pairs?, Exactness::ExactEnumerated, None)
            }
            ProcessSpec::CoupledPairs { links } => {
                // phi(m) = max coupling strength / 2 over links of lag >= m;
                // link intervals never interleave, so at most one coupling
                // crosses any (cut, separation) pair and the pair value is
                // exact.
                let pairs: Vec<(u32, f64)> = (1..=max_lag)
                    .map(|m| {
                        let phi = links
                            .iter()
                            .filter(|l| l.lag >= m)
                            .map(|l| l.strength / 2.0)
                            .fold(0.0f64, f64::max);
                        (m, phi)
                    })
                    .collect();
                MixingProfile::from_pairs(pairs, Exactness::ExactByConstruction, None)
            }
            ProcessSpec::ScaledSchedule { inner, .. } => {
                // Nonzero deterministic scaling generates the same
                // sigma-algebras.
                inner.certified_phi_profile(n, max_lag)
            }
        }
    }

    /// Exact per-index offsets that center the observable, where the model
    /// permits (all variants here are centered by construction or by exact
    /// marginal propagation).
    pub fn center_observables(&self, n: usize) -> Result<CenteringReport> {
        match self {
            ProcessSpec::InhomogeneousMarkov {
                state_values: h, ..
            } => {
                let chain = self.instantiate_chain(n)?;
                let offsets = chain
                    .marginals()
                    .iter()
                    .map(|law| law.iter().zip(h).map(|(&p, &v)| p * v).sum())
                    .collect();
                Ok(CenteringReport {
                    offsets,
                    method: CenteringMethod::ExactMarginals,
                })
            }
            _ => Ok(CenteringReport {
                offsets: vec![0.0; n],
                method: CenteringMethod::CenteredByConstruction,
            }),
        }
    }
}

/// How the centering offsets were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringMethod {
    CenteredByConstruction,
    ExactMarginals,
}

/// Per-index centering offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringReport {
    pub offsets: Vec<f64>,
    pub method: CenteringMethod,
}

/// Monte Carlo check of the centering: estimated residual mean and its
/// standard error, per index.
pub fn mc_centering_check(
    spec: &ProcessSpec,
    n: usize,
    n_paths: usize,
    root_seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let sampler = PathSampler::new(spec, n)?;
    let mut sums = vec![0.0; n];
    let mut sq = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let mut scratch = Scratch::default();
    for path in 0..n_paths {
        sampler.fill_path(root_seed, path as u64, &mut buf, &mut scratch);
        for (j, &v) in buf.iter().enumerate() {
            sums[j] += v;
            sq[j] += v * v;
        }
    }
    let np = n_paths as f64;
    Ok((0..n)
        .map(|j| {
            let mean = sums[j] / np;
            let var = (sq[j] / np - mean * mean).max(0.0);
            (mean, (var / np).sqrt())
        })
        .collect())
}

/// A materialized set of sample paths.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    n_paths: usize,
    horizon: usize,
    values: Vec<f64>,
    lineage: SeedLineage,
}

impl SampleBatch {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn lineage(&self) -> &SeedLineage {
        &self.lineage
    }

    /// Observations of path `p` (0-based), length `horizon`.
    pub fn path(&self, p: usize) -> &[f64] {
        &self.values[p * self.horizon..(p + 1) * self.horizon]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.horizon)
    }

    /// Builds a batch from raw values (used by tests and the truncation
    /// step). Entries must be finite.
    pub fn from_values(n_paths: usize, horizon: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_paths * horizon {
            return Err(Error::InvalidProcess(format!(
                "expected {} values, got {}",
                n_paths * horizon,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample {
                path: bad / horizon,
            });
        }
        Ok(Self {
            n_paths,
            horizon,
            values,
            lineage: SeedLineage {
                root_seed: 0,
                stream_base: 0,
            },
        })
    }

    /// Columnar CSV dump `(path, j, value)` with a header row.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "path,j,value")?;
        for (p, path) in self.paths().enumerate() {
            for (j, v) in path.iter().enumerate() {
                writeln!(w, "{p},{},{v}", j + 1)?;
            }
        }
        Ok(())
    }
}

/// Scratch buffers reused across paths.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    innovations: Vec<f64>,
    states: Vec<usize>,
}

/// Deterministic path generator for a fixed `(spec, horizon)`.
///
/// All per-spec precomputation (chain instantiation, centering offsets,
/// link layout, the per-index scale vector) happens once here; filling a
/// path is allocation-free given a scratch.
#[derive(Debug, Clone)]
pub struct PathSampler {
    n: usize,
    kernel: SamplerKernel,
    /// Per-index multipliers, 1.0 when no schedule applies.
    scales: Vec<f64>,
}

#[derive(Debug, Clone)]
enum SamplerKernel {
    Iid {
        base: BaseDist,
    },
    MovingAverage {
        base: BaseDist,
        weights: Vec<f64>,
        post_map: PostMap,
    },
    Markov {
        chain: FiniteChainSpec,
        state_values: Vec<f64>,
        offsets: Vec<f64>,
    },
    Coupled {
        layout: Vec<LinkRole>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LinkRole {
    Fresh,
    CopyOf { source: usize, strength: f64 },
}

impl PathSampler {
    pub fn new(spec: &ProcessSpec, n: usize) -> Result<Self> {
        spec.validate(n)?;
        let (inner, scales) = match spec {
            ProcessSpec::ScaledSchedule { inner, schedule } => {
                let scales = (1..=n).map(|j| schedule.at(j, n)).collect();
                (inner.as_ref(), scales)
            }
            other => (other, vec![1.0; n]),
        };
        let kernel = match inner {
            ProcessSpec::Iid { base } => SamplerKernel::Iid { base: *base },
            ProcessSpec::MDependent {
                base,
                weights,
                post_map,
            } => SamplerKernel::MovingAverage {
                base: *base,
                weights: weights.clone(),
                post_map: *post_map,
            },
            ProcessSpec::InhomogeneousMarkov { state_values, .. } => SamplerKernel::Markov {
                chain: inner.instantiate_chain(n)?,
                state_values: state_values.clone(),
                offsets: inner.center_observables(n)?.offsets,
            },
            ProcessSpec::CoupledPairs { links } => SamplerKernel::Coupled {
                layout: layout_links(links, n),
            },
            ProcessSpec::ScaledSchedule { .. } => {
                return Err(Error::InvalidProcess(
                    "nested scale schedules are not supported; fold them into one".into(),
                ))
            }
        };
        Ok(Self { n, kernel, scales })
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    /// Fills `buf` with path `path_idx` of the run keyed by `root_seed`.
    pub fn fill_path(&self, root_seed: u64, path_idx: u64, buf: &mut [f64], scratch: &mut Scratch) {
        debug_assert_eq!(buf.len(), self.n);
        let mut rng = path_stream(root_seed, path_idx);
        match &self.kernel {
            SamplerKernel::Iid { base } => {
                for v in buf.iter_mut() {
                    *v = base.sample(&mut rng);
                }
            }
            SamplerKernel::MovingAverage {
                base,
                weights,
                post_map,
            } => {
                let w = weights.len() - 1;
                let innov = &mut scratch.innovations;
                innov.clear();
                innov.extend((0..self.n + w).map(|_| base.sample(&mut rng)));
                for (j, v) in buf.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (t, &wt) in weights.iter().enumerate() {
                        acc += wt * innov[j + t];
                    }
                    *v = post_map.apply(acc);
                }
            }
            SamplerKernel::Markov {
                chain,
                state_values,
                offsets,
            } => {
                chain.sample_path(&mut rng, &mut scratch.states);
                for (j, v) in buf.iter_mut().enumerate() {
                    *v = state_values[scratch.states[j]] - offsets[j];
                }
            }
            SamplerKernel::Coupled { layout } => {
                for j in 0..self.n {
                    buf[j] = match layout[j] {
                        LinkRole::Fresh => fresh_sign(&mut rng),
                        LinkRole::CopyOf { source, strength } => {
                            if rng.gen::<f64>() < strength {
                                buf[source]
                            } else {
                                fresh_sign(&mut rng)
                            }
                        }
                    };
                }
            }
        }
        for (v, &a) in buf.iter_mut().zip(&self.scales) {
            *v *= a;
        }
    }
}

fn fresh_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Tiles link intervals along `1..=n` cyclically over the configured lags.
/// Intervals are laid end to end with one free index between them, so
/// their spans never interleave and at most one coupling crosses any cut.
fn layout_links(links: &[PairLink], n: usize) -> Vec<LinkRole> {
    let mut layout = vec![LinkRole::Fresh; n];
    let mut pos = 0usize; // 0-based index of the next link start
    let mut cycle = 0usize;
    loop {
        let link = links[cycle % links.len()];
        let end = pos + link.lag as usize;
        if end >= n {
            break;
        }
        layout[end] = LinkRole::CopyOf {
            source: pos,
            strength: link.strength,
        };
        pos = end + 2;
        cycle += 1;
        if pos >= n {
            break;
        }
    }
    layout
}

/// Builds the polynomial-mixing process: pair couplings with strengths
/// `q_m = min(1, 2 K m^(-p))` at every lag `m <= max_lag`, giving the
/// exact profile `phi(m) = min(1/2, K m^(-p))`.
pub fn polynomial_mixing_schedule(target_p: f64, k: f64, max_lag: u32) -> Result<ProcessSpec> {
    if !(target_p > 0.0) || !(k > 0.0) || max_lag == 0 {
        return Err(Error::Infeasible(format!(
            "polynomial mixing needs p > 0, K > 0, max_lag >= 1; got p={target_p}, K={k}, max_lag={max_lag}"
        )));
    }
    let links: Vec<PairLink> = (1..=max_lag)
        .map(|m| PairLink {
            lag: m,
            strength: (2.0 * k * f64::from(m).powf(-target_p)).min(1.0),
        })
        .collect();
    Ok(ProcessSpec::CoupledPairs { links })
}

/// The decay envelope certified by [`polynomial_mixing_schedule`].
pub fn polynomial_mixing_envelope(target_p: f64, k: f64) -> DecayModel {
    DecayModel { k, p: target_p }
}

/// Generates a materialized batch, parallel over paths in fixed chunks.
/// Identical inputs give bit-identical output for any worker count.
pub fn generate(
    spec: &ProcessSpec,
    n: usize,
    n_paths: usize,
    root_seed: u64,
) -> Result<SampleBatch> {
    if n_paths == 0 {
        return Err(Error::InvalidProcess("need >= 1 path".into()));
    }
    if n
        .checked_mul(n_paths)
        .map(|total| total > MAX_BATCH_ENTRIES)
        .unwrap_or(true)
    {
        return Err(Error::InvalidProcess(format!(
            "batch of {n_paths} x {n} exceeds the materialization guard; stream instead"
        )));
    }
    let sampler = PathSampler::new(spec, n)?;
    let mut values = vec![0.0; n * n_paths];
    values
        .par_chunks_mut(PATH_CHUNK * n)
        .enumerate()
        .for_each(|(chunk_idx, chunk)| {
            let mut scratch = Scratch::default();
            let first_path = chunk_idx * PATH_CHUNK;
            for (offset, buf) in chunk.chunks_exact_mut(n).enumerate() {
                sampler.fill_path(root_seed, (first_path + offset) as u64, buf, &mut scratch);
            }
        });
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSample { path: bad / n });
    }
    Ok(SampleBatch {
        n_paths,
        horizon: n,
        values,
        lineage: SeedLineage {
            root_seed,
            stream_base: 0,
        },
    })
}

/// Streams paths through `per_path`, returning results in path order.
/// Chunk boundaries are fixed, so the output is schedule-independent.
pub fn map_paths<T, F>(
    spec: &ProcessSpec,
    n: usize,
    n_paths: usize,
    root_seed: u64,
    per_path: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &[f64]) -> T + Sync,
{
    let sampler = PathSampler::new(spec, n)?;
    let n_chunks = n_paths.div_ceil(PATH_CHUNK);
    let mut out: Vec<Vec<T>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk_idx| {
            let mut scratch = Scratch::default();
            let mut buf = vec![0.0; n];
            let lo = chunk_idx * PATH_CHUNK;
            let hi = ((chunk_idx + 1) * PATH_CHUNK).min(n_paths);
            let mut results = Vec::with_capacity(hi - lo);
            for path in lo..hi {
                sampler.fill_path(root_seed, path as u64, &mut buf, &mut scratch);
                results.push(per_path(path, &buf));
            }
            results
        })
        .collect();
    let mut flat = Vec::with_capacity(n_paths);
    for chunk in out.drain(..) {
        flat.extend(chunk);
    }
    Ok(flat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iid_generation_is_reproducible() {
        let spec = ProcessSpec::Iid {
            base: BaseDist::Normal,
        };
        let a = generate(&spec, 4, 2, 7).unwrap();
        let b = generate(&spec, 4, 2, 7).unwrap();
        assert_eq!(a.path(0), b.path(0));
        assert_eq!(a.path(1), b.path(1));
        assert_ne!(a.path(0), a.path(1));
        let c = generate(&spec, 4, 2, 8).unwrap();
        assert_ne!(a.path(0), c.path(0));
    }

    #[test]
    fn m_dependent_correlation_vanishes_beyond_window() {
        // Window 2: values 3 apart share no innovations, so their sample
        // correlation over many paths is zero within 3 standard errors.
        let spec = ProcessSpec::MDependent {
            base: BaseDist::Normal,
            weights: vec![1.0, 0.7, 0.4],
            post_map: PostMap::Identity,
        };
        let n_paths = 100_000;
        let batch = generate(&spec, 8, n_paths, 99).unwrap();
        let (mut s01, mut s03, mut sq0) = (0.0, 0.0, 0.0);
        for path in batch.paths() {
            s01 += path[0] * path[1];
            s03 += path[0] * path[3];
            sq0 += path[0] * path[0];
        }
        let np = n_paths as f64;
        let var = sq0 / np;
        let corr_inside = s01 / np / var;
        let corr_outside = s03 / np / var;
        let se = 1.0 / np.sqrt();
        assert!(
            corr_outside.abs() <= 3.0 * se,
            "beyond-window correlation {corr_outside} exceeds 3 SE {se}"
        );
        // Inside the window the correlation is real.
        assert!(corr_inside > 0.3);
    }

    #[test]
    fn scaled_schedule_matches_closed_form_variance() {
        let spec = ProcessSpec::ScaledSchedule {
            inner: Box::new(ProcessSpec::Iid {
                base: BaseDist::Normal,
            }),
            schedule: ScaleSchedule::Affine {
                intercept: 1.0,
                slope: 1.0,
            },
        };
        let n = 16;
        let n_paths = 200_000;
        let batch = generate(&spec, n, n_paths, 5).unwrap();
        let mut sq = vec![0.0; n];
        for path in batch.paths() {
            for (j, &v) in path.iter().enumerate() {
                sq[j] += v * v;
            }
        }
        for j in 1..=n {
            let a = 1.0 + j as f64 / n as f64;
            let var = sq[j - 1] / n_paths as f64;
            let se = a * a * (2.0f64 / n_paths as f64).sqrt();
            assert!(
                (var - a * a).abs() < 4.0 * se,
                "j={j}: var {var} vs a_j^2 {}",
                a * a
            );
        }
    }

    #[test]
    fn markov_observable_is_exactly_centered() {
        let spec = ProcessSpec::InhomogeneousMarkov {
            initial_law: vec![0.9, 0.1],
            step_matrices: vec![
                StochasticMatrix::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap(),
            ],
            state_values: vec![1.0, 0.0],
        };
        // Offsets are the exact marginal probabilities of state 0.
        let report = spec.center_observables(5).unwrap();
        assert_eq!(report.method, CenteringMethod::ExactMarginals);
        assert!((report.offsets[0] - 0.9).abs() < 1e-15);
        let expected_1 = 0.9 * 0.7 + 0.1 * 0.2;
        assert!((report.offsets[1] - expected_1).abs() < 1e-15);

        // The generated values have empirical mean near zero.
        let check = mc_centering_check(&spec, 5, 60_000, 11).unwrap();
        for (j, (mean, se)) in check.iter().enumerate() {
            assert!(
                mean.abs() <= 4.0 * se,
                "index {j}: residual {mean} vs se {se}"
            );
        }
    }

    #[test]
    fn mc_centering_of_bounded_nonlinearity() {
        let spec = ProcessSpec::MDependent {
            base: BaseDist::Normal,
            weights: vec![1.0, 0.5],
            post_map: PostMap::Tanh { gain: 1.3 },
        };
        let check = mc_centering_check(&spec, 6, 200_000, 3).unwrap();
        for (j, (mean, se)) in check.iter().enumerate() {
            assert!(
                mean.abs() <= 3.0 * se,
                "index {j}: residual {mean} vs 3 SE {se}"
            );
        }
    }

    #[test]
    fn nonlinear_map_needs_symmetric_base() {
        let spec = ProcessSpec::MDependent {
            base: BaseDist::BernoulliCentered { p: 0.1 },
            weights: vec![1.0],
            post_map: PostMap::Cube,
        };
        assert!(spec.validate(4).is_err());
    }

    #[test]
    fn polynomial_schedule_profile_matches_envelope() {
        let spec = polynomial_mixing_schedule(3.0, 1.0, 8).unwrap();
        let profile = spec.certified_phi_profile(64, 10).unwrap();
        // phi(1) = min(1/2, 1) = 1/2; phi(8) = 8^-3.
        assert!((profile.at(1).unwrap() - 0.5).abs() < 1e-15);
        assert!((profile.at(8).unwrap() - 8.0f64.powi(-3)).abs() < 1e-15);
        assert_eq!(profile.at(9), Some(0.0));
        // Never exceeds the declared envelope.
        let env = polynomial_mixing_envelope(3.0, 1.0);
        for (m, v) in profile.iter() {
            assert!(v <= env.at(m) + 1e-15, "lag {m}");
        }
    }

    #[test]
    fn polynomial_schedule_rejects_bad_parameters() {
        assert!(polynomial_mixing_schedule(0.0, 1.0, 4).is_err());
        assert!(polynomial_mixing_schedule(2.0, -1.0, 4).is_err());
        assert!(polynomial_mixing_schedule(2.0, 1.0, 0).is_err());
    }

    #[test]
    fn max_lag_one_is_iid_beyond_lag_one() {
        let spec = polynomial_mixing_schedule(2.0, 1.0, 1).unwrap();
        let profile = spec.certified_phi_profile(32, 6).unwrap();
        assert!(profile.at(1).unwrap() > 0.0);
        for m in 2..=6 {
            assert_eq!(profile.at(m), Some(0.0), "lag {m}");
        }
    }

    #[test]
    fn coupled_pairs_empirical_coupling_matches_strength() {
        // The first link (lag 1, strength q) couples indices 1 and 2:
        // E[X_1 X_2] = q.
        let spec = polynomial_mixing_schedule(2.0, 0.2, 4).unwrap();
        let q = match &spec {
            ProcessSpec::CoupledPairs { links } => links[0].strength,
            _ => unreachable!(),
        };
        let n_paths = 200_000;
        let batch = generate(&spec, 8, n_paths, 17).unwrap();
        let mut s = 0.0;
        for path in batch.paths() {
            s += path[0] * path[1];
        }
        let got = s / n_paths as f64;
        let se = 1.0 / (n_paths as f64).sqrt();
        assert!((got - q).abs() < 4.0 * se, "coupling {got} vs strength {q}");
    }

    #[test]
    fn map_paths_matches_generate() {
        let spec = ProcessSpec::MDependent {
            base: BaseDist::Rademacher,
            weights: vec![1.0, 1.0],
            post_map: PostMap::Identity,
        };
        let batch = generate(&spec, 6, 1000, 23).unwrap();
        let sums = map_paths(&spec, 6, 1000, 23, |_, path| path.iter().sum::<f64>()).unwrap();
        for (p, &s) in sums.iter().enumerate() {
            let want: f64 = batch.path(p).iter().sum();
            assert_eq!(s, want);
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let spec = ProcessSpec::Iid {
            base: BaseDist::Rademacher,
        };
        let batch = generate(&spec, 3, 2, 1).unwrap();
        let mut out = Vec::new();
        batch.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("path,j,value"));
        assert_eq!(lines.count(), 6);
    }
}
