//! Statistics `T = S + R` and their bound ingredients.
//!
//! Each variant evaluates per path; the decomposition `T = S + R` is exact
//! to rounding, and the studentized variant carries the zero-denominator
//! branch explicitly so it can never emit a non-finite value.

use crate::processes::SampleBatch;
use crate::rng::path_stream;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Studentizing window rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WindowRule {
    /// Fixed window.
    Fixed { m: usize },
    /// `m = ceil(N^exponent)`.
    PowerOfN { exponent: f64 },
}

impl WindowRule {
    pub fn resolve(&self, n: usize) -> usize {
        match self {
            WindowRule::Fixed { m } => (*m).max(1),
            WindowRule::PowerOfN { exponent } => (n as f64).powf(*exponent).ceil() as usize,
        }
    }
}

/// Symmetric second-order kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum UKernel {
    /// `psi(x, y) = x * y`; degenerate for centered inputs.
    Product,
    /// `psi(x, y) = x + y`; not degenerate unless the mean is zero and
    /// stays useful as the negative control for the degeneracy check.
    Sum,
    /// `psi(x, y) = x * y - c`.
    ProductMinus { c: f64 },
}

impl UKernel {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            UKernel::Product => x * y,
            UKernel::Sum => x + y,
            UKernel::ProductMinus { c } => x * y - c,
        }
    }

    /// Checks `psi(x, y) = psi(y, x)` on a deterministic sample of pairs.
    pub fn check_symmetry(&self, probes: usize, seed: u64) -> Result<()> {
        let mut rng = path_stream(seed, 0x5939);
        for _ in 0..probes {
            let x = 4.0 * rng.gen::<f64>() - 2.0;
            let y = 4.0 * rng.gen::<f64>() - 2.0;
            if (self.eval(x, y) - self.eval(y, x)).abs() > 1e-12 {
                return Err(Error::UnsupportedStatistic(format!(
                    "kernel asymmetric at ({x}, {y})"
                )));
            }
        }
        Ok(())
    }
}

/// Quadratic smooth map `H(x) = a^T x + x^T Q x` on `R^d` (`Q` symmetric).
/// Covers the linear case with `Q = 0`; `H(0) = 0`, `H'(0) = a`, and the
/// Hessian bound is `2 ||Q||`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothMap {
    pub linear: Vec<f64>,
    pub quadratic: Vec<Vec<f64>>,
}

impl SmoothMap {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || d > 8 {
            return Err(Error::UnsupportedStatistic(format!(
                "function-of-mean dimension must be in 1..=8, got {d}"
            )));
        }
        if self.quadratic.len() != d || self.quadratic.iter().any(|r| r.len() != d) {
            return Err(Error::UnsupportedStatistic(
                "quadratic part must be d x d".into(),
            ));
        }
        for i in 0..d {
            for j in 0..d {
                if (self.quadratic[i][j] - self.quadratic[j][i]).abs() > 1e-12 {
                    return Err(Error::UnsupportedStatistic(
                        "quadratic part must be symmetric".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            acc += self.linear[i] * xi;
            for (j, &xj) in x.iter().enumerate() {
                acc += self.quadratic[i][j] * xi * xj;
            }
        }
        acc
    }

    /// `H'(0) x = a^T x`.
    pub fn gradient_at_zero_dot(&self, x: &[f64]) -> f64 {
        self.linear.iter().zip(x).map(|(a, v)| a * v).sum()
    }

    /// Upper bound on `sup ||H''||` (Frobenius norm of `2Q` dominates the
    /// operator norm).
    pub fn hessian_bound(&self) -> f64 {
        let frob: f64 = self
            .quadratic
            .iter()
            .flatten()
            .map(|q| q * q)
            .sum::<f64>()
            .sqrt();
        2.0 * frob
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.iter().flatten().all(|&q| q == 0.0)
    }
}

/// Statistic specifications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatisticSpec {
    /// `T = S = sum_j g_j(X_j)`.
    Linear,
    /// `U' = S' + R'` with `R' = (1/N) sum_{i<j} psi(X_i, X_j)`.
    UStatistic { kernel: UKernel },
    /// Self-normalized `t~ = S / s` with the windowed variance estimator.
    Studentized { window: WindowRule },
    /// `T = sum_j H'(0) X_j + N (H(mean) - H(0) - H'(0) mean)`.
    FunctionOfMean { map: SmoothMap },
}

impl StatisticSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            StatisticSpec::Linear => Ok(()),
            StatisticSpec::UStatistic { kernel } => kernel.check_symmetry(64, 1),
            StatisticSpec::Studentized { window } => match window {
                WindowRule::Fixed { m } if *m == 0 => Err(Error::UnsupportedStatistic(
                    "studentized window must be >= 1".into(),
                )),
                WindowRule::PowerOfN { exponent } if !(0.0..1.0).contains(exponent) => Err(
                    Error::UnsupportedStatistic("window exponent must be in [0, 1)".into()),
                ),
                _ => Ok(()),
            },
            StatisticSpec::FunctionOfMean { map } => map.validate(),
        }
    }

    /// Dimension of the per-index observation this statistic consumes.
    pub fn input_dim(&self) -> usize {
        match self {
            StatisticSpec::FunctionOfMean { map } => map.dim(),
            _ => 1,
        }
    }
}

/// Per-path decomposition `T = S + R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStatistic {
    pub t: f64,
    pub s: f64,
    pub r: f64,
}

/// Row sum: the linear statistic of one path.
pub fn eval_linear_path(path: &[f64]) -> f64 {
    path.iter().sum()
}

/// Linear statistic: `S` per path.
pub fn eval_linear(batch: &SampleBatch) -> Vec<f64> {
    batch.paths().map(eval_linear_path).collect()
}

/// U-statistic remainder for one path, closed forms where the kernel
/// permits, with the `O(N^2)` double sum as the general route.
pub fn u_remainder_path(kernel: &UKernel, path: &[f64]) -> f64 {
    let n = path.len() as f64;
    match kernel {
        UKernel::Product => {
            let s: f64 = path.iter().sum();
            let sq: f64 = path.iter().map(|x| x * x).sum();
            (s * s - sq) / (2.0 * n)
        }
        UKernel::Sum => {
            let s: f64 = path.iter().sum();
            (n - 1.0) * s / n
        }
        UKernel::ProductMinus { c } => {
            let s: f64 = path.iter().sum();
            let sq: f64 = path.iter().map(|x| x * x).sum();
            (s * s - sq) / (2.0 * n) - c * (n - 1.0) / 2.0
        }
    }
}

/// Literal double-sum remainder; the oracle for the closed forms.
pub fn u_remainder_naive(kernel: &UKernel, path: &[f64]) -> f64 {
    let n = path.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            acc += kernel.eval(path[i], path[j]);
        }
    }
    acc / n as f64
}

/// U-statistic per path: `(S', R', U' = S' + R')`.
pub fn eval_u_statistic(batch: &SampleBatch, kernel: &UKernel) -> Result<Vec<PathStatistic>> {
    if batch.horizon() < 2 {
        return Err(Error::UnsupportedStatistic(
            "u-statistic needs horizon >= 2".into(),
        ));
    }
    Ok(batch
        .paths()
        .map(|path| {
            let s = eval_linear_path(path);
            let r = u_remainder_path(kernel, path);
            PathStatistic { t: s + r, s, r }
        })
        .collect())
}

/// Studentized statistic for one path: the windowed variance estimator
/// `s^2 = sum_j sum_{|l-j|<=m} x_j x_l` (diagonal included), and
/// `t~ = S / s` with the explicit zero branch `t~ = 0` when `s = 0`.
pub fn studentized_path(path: &[f64], m: usize) -> f64 {
    let n = path.len();
    // Prefix sums give each centered window in O(1).
    let mut prefix = vec![0.0; n + 1];
    for (j, &x) in path.iter().enumerate() {
        prefix[j + 1] = prefix[j] + x;
    }
    let mut s2 = 0.0;
    for (j, &x) in path.iter().enumerate() {
        let lo = j.saturating_sub(m);
        let hi = (j + m + 1).min(n);
        s2 += x * (prefix[hi] - prefix[lo]);
    }
    let s_total = prefix[n];
    let s = s2.max(0.0).sqrt();
    if s > 0.0 {
        s_total / s
    } else {
        0.0
    }
}

/// Studentized statistic per path.
pub fn eval_studentized(batch: &SampleBatch, window: WindowRule) -> Vec<f64> {
    let m = window.resolve(batch.horizon());
    batch.paths().map(|path| studentized_path(path, m)).collect()
}

/// Function-of-mean decomposition for one interleaved path
/// (`d` coordinates per index): `S = sum_j a^T X_j`,
/// `R = N (H(mean) - H(0) - a^T mean)`.
pub fn function_of_mean_path(map: &SmoothMap, path: &[f64], d: usize) -> PathStatistic {
    debug_assert_eq!(path.len() % d, 0);
    let n = (path.len() / d) as f64;
    let mut mean = vec![0.0; d];
    let mut s = 0.0;
    for obs in path.chunks_exact(d) {
        s += map.gradient_at_zero_dot(obs);
        for (acc, &v) in mean.iter_mut().zip(obs) {
            *acc += v;
        }
    }
    for acc in &mut mean {
        *acc /= n;
    }
    let r = n * (map.eval(&mean) - map.gradient_at_zero_dot(&mean));
    PathStatistic { t: s + r, s, r }
}

/// Monte Carlo degeneracy check: estimates `E[psi(x, X)]` at probe points
/// `x` drawn from the marginal sampler, flagging probes whose estimate
/// exceeds four standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub probes: Vec<DegeneracyProbe>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DegeneracyProbe {
    pub x: f64,
    pub estimate: f64,
    pub se: f64,
}

pub fn check_degeneracy(
    kernel: &UKernel,
    marginal: impl Fn(&mut rand_chacha::ChaCha8Rng) -> f64,
    probe_count: usize,
    samples_per_probe: usize,
    seed: u64,
) -> Result<DegeneracyReport> {
    if probe_count == 0 {
        return Err(Error::InsufficientData("need >= 1 probe".into()));
    }
    let mut rng = path_stream(seed, 0xde6e);
    let mut probes = Vec::with_capacity(probe_count);
    let mut passed = true;
    for _ in 0..probe_count {
        let x = marginal(&mut rng);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..samples_per_probe {
            let y = marginal(&mut rng);
            let v = kernel.eval(x, y);
            sum += v;
            sq += v * v;
        }
        let nm = samples_per_probe as f64;
        let estimate = sum / nm;
        let var = (sq / nm - estimate * estimate).max(0.0);
        let se = (var / nm).sqrt();
        if estimate.abs() > 4.0 * se.max(1e-12) {
            passed = false;
        }
        probes.push(DegeneracyProbe { x, estimate, se });
    }
    Ok(DegeneracyReport { probes, passed })
}

/// Truncation ledger from the square-root-of-N truncation step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationLedger {
    /// Truncation threshold `sqrt(N)`.
    pub threshold: f64,
    /// Per-index pre-truncation third absolute moment estimates.
    pub rho3: Vec<f64>,
    /// Per-index bound `rho3 / N` on the expected shift magnitude.
    pub shift_bound: Vec<f64>,
    /// Per-index bound `4 rho3 / sqrt(N)` on the second moment change.
    pub variance_bound: Vec<f64>,
    /// Per-index measured `E|Delta_j|`.
    pub measured_abs_shift: Vec<f64>,
    /// Per-index measured `E[Delta_j^2]`.
    pub measured_sq_shift: Vec<f64>,
}

/// Truncates at `sqrt(N)` and re-centers with the Monte Carlo column mean,
/// returning the new batch and the error ledger.
pub fn truncate_center(batch: &SampleBatch) -> Result<(SampleBatch, TruncationLedger)> {
    let n = batch.horizon();
    let n_paths = batch.n_paths();
    let threshold = (n as f64).sqrt();
    let np = n_paths as f64;

    let mut trunc_mean = vec![0.0; n];
    let mut rho3 = vec![0.0; n];
    let mut drop_mean = vec![0.0; n];
    for path in batch.paths() {
        for (j, &v) in path.iter().enumerate() {
            let kept = if v.abs() <= threshold { v } else { 0.0 };
            trunc_mean[j] += kept;
            drop_mean[j] += v - kept;
            rho3[j] += v.abs().powi(3);
        }
    }
    for j in 0..n {
        trunc_mean[j] /= np;
        drop_mean[j] /= np;
        rho3[j] /= np;
    }

    let mut values = Vec::with_capacity(n_paths * n);
    let mut abs_shift = vec![0.0; n];
    let mut sq_shift = vec![0.0; n];
    for path in batch.paths() {
        for (j, &v) in path.iter().enumerate() {
            let kept = if v.abs() <= threshold { v } else { 0.0 };
            values.push(kept - trunc_mean[j]);
            // Delta_j = g 1{|g| > t} - E[g 1{|g| > t}].
            let delta = (v - kept) - drop_mean[j];
            abs_shift[j] += delta.abs();
            sq_shift[j] += delta * delta;
        }
    }
    for j in 0..n {
        abs_shift[j] /= np;
        sq_shift[j] /= np;
    }

    let ledger = TruncationLedger {
        threshold,
        shift_bound: rho3.iter().map(|r| r / n as f64).collect(),
        variance_bound: rho3.iter().map(|r| 4.0 * r / (n as f64).sqrt()).collect(),
        rho3,
        measured_abs_shift: abs_shift,
        measured_sq_shift: sq_shift,
    };
    Ok((SampleBatch::from_values(n_paths, n, values)?, ledger))
}

/// Moment ingredients of a batch: per-index third absolute moments, their
/// maximum, and the variance of the row sums, all with standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentIngredients {
    /// Per-index `(E|g_j|^3, se)`.
    pub rho3: Vec<(f64, f64)>,
    /// `sup_j E|g_j|^3` with the standard error at the attaining index.
    pub rho3_max: (f64, f64),
    /// `(Var(S_N), se)` across paths.
    pub sigma2: (f64, f64),
}

pub fn moment_ingredients(batch: &SampleBatch) -> Result<MomentIngredients> {
    let n_paths = batch.n_paths();
    if n_paths < 2 {
        return Err(Error::InsufficientData(
            "moment ingredients need >= 2 paths".into(),
        ));
    }
    let n = batch.horizon();
    let np = n_paths as f64;
    let mut m3 = vec![0.0; n];
    let mut m6 = vec![0.0; n];
    let mut sum_s = 0.0;
    let mut sum_s2 = 0.0;
    let mut sum_s4 = 0.0;
    for path in batch.paths() {
        let mut s = 0.0;
        for (j, &v) in path.iter().enumerate() {
            let a3 = v.abs().powi(3);
            m3[j] += a3;
            m6[j] += a3 * a3;
            s += v;
        }
        sum_s += s;
        sum_s2 += s * s;
        sum_s4 += s * s * s * s;
    }
    let rho3: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let mean = m3[j] / np;
            let var = (m6[j] / np - mean * mean).max(0.0);
            (mean, (var / np).sqrt())
        })
        .collect();
    let rho3_max = rho3
        .iter()
        .copied()
        .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite moments"))
        .expect("nonempty");
    let mean_s = sum_s / np;
    let sigma2 = (sum_s2 / np - mean_s * mean_s).max(0.0);
    // Asymptotic standard error of the sample variance.
    let m4 = sum_s4 / np;
    let se = ((m4 - sigma2 * sigma2).max(0.0) / np).sqrt();
    Ok(MomentIngredients {
        rho3,
        rho3_max,
        sigma2: (sigma2, se),
    })
}

/// Remainder increment `R_{j,k} - R_{j,k-1}` of the U-statistic family for
/// one path: the pairs lost when the conditioning interval grows from
/// `[j, k-1]` to `[j, k]` are exactly those joining `k` to the outside.
pub fn u_increment_path(kernel: &UKernel, path: &[f64], j: usize, k: usize) -> f64 {
    let n = path.len();
    debug_assert!(1 <= j && j <= k && k <= n);
    let xk = path[k - 1];
    let mut acc = 0.0;
    for (idx0, &xl) in path.iter().enumerate() {
        let l = idx0 + 1;
        if l >= j && l <= k {
            continue;
        }
        acc += kernel.eval(xk, xl);
    }
    -acc / n as f64
}

/// Literal `R_{j,k}`: pairs with both endpoints outside `[j, k]`
/// (`k = j - 1` recovers the full remainder). Oracle for
/// [`u_increment_path`].
pub fn u_conditional_remainder_naive(kernel: &UKernel, path: &[f64], j: usize, k: usize) -> f64 {
    let n = path.len();
    let outside = |l: usize| l < j || l > k;
    let mut acc = 0.0;
    for a in 1..=n {
        for b in a + 1..=n {
            if outside(a) && outside(b) {
                acc += kernel.eval(path[a - 1], path[b - 1]);
            }
        }
    }
    acc / n as f64
}

/// Gamma estimate: the maximal `E[|R_{j,k} - R_{j,k-1}|^{3/2}]^{2/3}` over
/// a grid of `(j, k)` pairs with `k - j <= N^epsilon`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub gamma: f64,
    pub se: f64,
    /// The grid of `(j, k)` pairs examined.
    pub grid: Vec<(usize, usize)>,
    /// Pair attaining the maximum.
    pub argmax: (usize, usize),
    /// Whether the grid was exhaustive over the epsilon band.
    pub exhaustive: bool,
}

/// Builds the `(j, k)` band `k - j <= floor(N^epsilon)` and evenly
/// subsamples it down to `max_grid` pairs.
pub fn gamma_grid(n: usize, epsilon: f64, max_grid: usize) -> (Vec<(usize, usize)>, bool) {
    let width = (n as f64).powf(epsilon).floor() as usize;
    let mut all = Vec::new();
    for j in 1..=n {
        for k in j..=(j + width).min(n) {
            all.push((j, k));
        }
    }
    if all.len() <= max_grid {
        return (all, true);
    }
    let stride = all.len() as f64 / max_grid as f64;
    let picked = (0..max_grid)
        .map(|i| all[(i as f64 * stride) as usize])
        .collect();
    (picked, false)
}

/// Estimates gamma for a statistic over a batch. Linear statistics have
/// `R = 0` identically; studentized and function-of-mean variants have no
/// specified conditional-remainder family and report an error rather than
/// a guess.
pub fn gamma_estimate(
    spec: &StatisticSpec,
    batch: &SampleBatch,
    epsilon: f64,
    max_grid: usize,
) -> Result<GammaEstimate> {
    match spec {
        StatisticSpec::Linear => Ok(GammaEstimate {
            gamma: 0.0,
            se: 0.0,
            grid: Vec::new(),
            argmax: (0, 0),
            exhaustive: true,
        }),
        StatisticSpec::UStatistic { kernel } => {
            let n = batch.horizon();
            let n_paths = batch.n_paths();
            if n_paths < 2 {
                return Err(Error::InsufficientData("gamma needs >= 2 paths".into()));
            }
            let (grid, exhaustive) = gamma_grid(n, epsilon, max_grid);
            let np = n_paths as f64;
            let mut best = (0.0f64, 0.0f64, (0usize, 0usize));
            for &(j, k) in &grid {
                let mut sum = 0.0;
                let mut sq = 0.0;
                for path in batch.paths() {
                    let d = u_increment_path(kernel, path, j, k).abs().powf(1.5);
                    sum += d;
                    sq += d * d;
                }
                let mean = sum / np;
                let var = (sq / np - mean * mean).max(0.0);
                let se_mean = (var / np).sqrt();
                if mean > best.0 {
                    best = (mean, se_mean, (j, k));
                }
            }
            let gamma = best.0.powf(2.0 / 3.0);
            // Delta method on x -> x^(2/3).
            let se = if best.0 > 0.0 {
                (2.0 / 3.0) * best.0.powf(-1.0 / 3.0) * best.1
            } else {
                0.0
            };
            Ok(GammaEstimate {
                gamma,
                se,
                grid,
                argmax: best.2,
                exhaustive,
            })
        }
        StatisticSpec::Studentized { .. } => Err(Error::UnsupportedStatistic(
            "no conditional-remainder family is specified for the studentized statistic; \
             gamma is reported as undefined"
                .into(),
        )),
        StatisticSpec::FunctionOfMean { .. } => Err(Error::UnsupportedStatistic(
            "no conditional-remainder family is specified for functions of sample means; \
             gamma is reported as undefined"
                .into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::{generate, BaseDist, ProcessSpec};

    fn batch_of(values: &[&[f64]]) -> SampleBatch {
        let horizon = values[0].len();
        SampleBatch::from_values(
            values.len(),
            horizon,
            values.iter().flat_map(|p| p.iter().copied()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn linear_row_sums() {
        let batch = batch_of(&[&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]]);
        assert_eq!(eval_linear(&batch), vec![0.0, 6.0]);
    }

    #[test]
    fn linear_matches_compensated_oracle() {
        // Independently coded Kahan summation oracle.
        fn kahan(xs: &[f64]) -> f64 {
            let (mut sum, mut c) = (0.0f64, 0.0f64);
            for &x in xs {
                let y = x - c;
                let t = sum + y;
                c = (t - sum) - y;
                sum = t;
            }
            sum
        }
        let spec = ProcessSpec::Iid {
            base: BaseDist::Normal,
        };
        let batch = generate(&spec, 257, 50, 9).unwrap();
        for path in batch.paths() {
            let plain = eval_linear_path(path);
            let oracle = kahan(path);
            assert!((plain - oracle).abs() <= 1e-10 * (1.0 + oracle.abs()));
        }
    }

    #[test]
    fn u_statistic_zero_kernel_behaviour() {
        let batch = batch_of(&[&[1.0, 2.0, 3.0]]);
        let res = eval_u_statistic(&batch, &UKernel::ProductMinus { c: 0.0 }).unwrap();
        // psi = xy: R' = (1*2 + 1*3 + 2*3) / 3 = 11/3.
        assert!((res[0].r - 11.0 / 3.0).abs() < 1e-12);
        assert!((res[0].s - 6.0).abs() < 1e-12);
        assert!((res[0].t - (6.0 + 11.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn u_closed_forms_match_double_sum() {
        let spec = ProcessSpec::Iid {
            base: BaseDist::Normal,
        };
        let batch = generate(&spec, 17, 40, 3).unwrap();
        for kernel in [
            UKernel::Product,
            UKernel::Sum,
            UKernel::ProductMinus { c: 0.7 },
        ] {
            for path in batch.paths() {
                let fast = u_remainder_path(&kernel, path);
                let slow = u_remainder_naive(&kernel, path);
                assert!(
                    (fast - slow).abs() < 1e-10 * (1.0 + slow.abs()),
                    "{kernel:?}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn u_statistic_reversal_invariance() {
        let spec = ProcessSpec::Iid {
            base: BaseDist::Uniform { half_width: 1.0 },
        };
        let batch = generate(&spec, 9, 20, 5).unwrap();
        for path in batch.paths() {
            let mut rev = path.to_vec();
            rev.reverse();
            let a = u_remainder_path(&UKernel::Product, path) + eval_linear_path(path);
            let b = u_remainder_path(&UKernel::Product, &rev) + eval_linear_path(&rev);
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_kernel_remainder_has_small_mean() {
        // Centered inputs with psi = xy: E[R'] = (1/N) sum_{i<j}
        // Cov(X_i, X_j) = 0 for i.i.d. inputs.
        let spec = ProcessSpec::Iid {
            base: BaseDist::Normal,
        };
        let batch = generate(&spec, 32, 60_000, 21).unwrap();
        let res = eval_u_statistic(&batch, &UKernel::Product).unwrap();
        let np = res.len() as f64;
        let mean = res.iter().map(|p| p.r).sum::<f64>() / np;
        let var = res.iter().map(|p| (p.r - mean) * (p.r - mean)).sum::<f64>() / np;
        let se = (var / np).sqrt();
        assert!(mean.abs() <= 3.0 * se, "E[R'] = {mean}, se = {se}");
    }

    #[test]
    fn studentized_zero_branch() {
        assert_eq!(studentized_path(&[0.0, 0.0, 0.0], 1), 0.0);
    }

    #[test]
    fn studentized_small_case() {
        // N=2, m=1, path (1,1): s^2 = 4, S = 2, t = 1.
        let t = studentized_path(&[1.0, 1.0], 1);
        assert!((t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn studentized_never_non_finite() {
        let spec = ProcessSpec::Iid {
            base: BaseDist::Rademacher,
        };
        let batch = generate(&spec, 16, 2_000, 77).unwrap();
        for t in eval_studentized(&batch, WindowRule::Fixed { m: 2 }) {
            assert!(t.is_finite());
        }
        // Adversarial: anti-correlated path where s^2 can go negative
        // before the max(., 0) clamp.
        let path: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(studentized_path(&path, 3).is_finite());
    }

    #[test]
    fn studentized_consistency_at_scale() {
        // i.i.d. normal with window ceil(N^0.2): s^2 / N -> 1.
        let n = 4096;
        let spec = ProcessSpec::Iid {
            base: BaseDist::Normal,
        };
        let batch = generate(&spec, n, 400, 13).unwrap();
        let m = WindowRule::PowerOfN { exponent: 0.2 }.resolve(n);
        let mut ratios = Vec::new();
        for path in batch.paths() {
            let mut prefix = vec![0.0; n + 1];
            for (j, &x) in path.iter().enumerate() {
                prefix[j + 1] = prefix[j] + x;
            }
            let mut s2 = 0.0;
            for (j, &x) in path.iter().enumerate() {
                let lo = j.saturating_sub(m);
                let hi = (j + m + 1).min(n);
                s2 += x * (prefix[hi] - prefix[lo]);
            }
            ratios.push(s2 / n as f64);
        }
        let np = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / np;
        let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / np;
        let se = (var / np).sqrt();
        assert!(
            (mean - 1.0).abs() <= 3.0 * se.max(0.02),
            "s^2/N = {mean} (se {se})"
        );
    }

    #[test]
    fn function_of_mean_linear_map_has_zero_remainder() {
        let map = SmoothMap {
            linear: vec![2.0, -1.0],
            quadratic: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        };
        let path = [0.5, 1.0, -0.25, 0.75, 2.0, -1.0];
        let stat = function_of_mean_path(&map, &path, 2);
        assert_eq!(stat.r, 0.0);
        assert!((stat.t - stat.s).abs() < 1e-15);
    }

    #[test]
    fn function_of_mean_square_case() {
        // H(x) = x^2, one dimension: R = N * mean^2.
        let map = SmoothMap {
            linear: vec![0.0],
            quadratic: vec![vec![1.0]],
        };
        // 10 observations with mean 0.1.
        let path = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let stat = function_of_mean_path(&map, &path, 1);
        assert!((stat.r - 10.0 * 0.01).abs() < 1e-12, "r = {}", stat.r);
    }

    #[test]
    fn function_of_mean_taylor_bound() {
        let map = SmoothMap {
            linear: vec![1.0, 0.5],
            quadratic: vec![vec![0.8, 0.1], vec![0.1, -0.4]],
        };
        let m2 = map.hessian_bound();
        let spec = ProcessSpec::Iid {
            base: BaseDist::Uniform { half_width: 1.0 },
        };
        // Interleave two independent coordinate streams.
        let d = 2;
        let batch = generate(&spec, 20 * d, 200, 31).unwrap();
        for path in batch.paths() {
            let stat = function_of_mean_path(&map, path, d);
            let n = (path.len() / d) as f64;
            let mut mean = vec![0.0; d];
            for obs in path.chunks_exact(d) {
                for (acc, &v) in mean.iter_mut().zip(obs) {
                    *acc += v;
                }
            }
            let norm2: f64 = mean.iter().map(|v| (v / n) * (v / n)).sum();
            assert!(
                stat.r.abs() <= n * m2 * norm2 / 2.0 + 1e-12,
                "R = {} vs Taylor bound {}",
                stat.r,
                n * m2 * norm2 / 2.0
            );
        }
    }

    #[test]
    fn t_equals_s_plus_r_across_variants() {
        let spec = ProcessSpec::Iid {
            base: BaseDist::Normal,
        };
        let batch = generate(&spec, 24, 50, 41).unwrap();
        for p in eval_u_statistic(&batch, &UKernel::Product).unwrap() {
            assert!((p.t - (p.s + p.r)).abs() < 1e-12);
        }
        let map = SmoothMap {
            linear: vec![1.0],
            quadratic: vec![vec![0.3]],
        };
        for path in batch.paths() {
            let p = function_of_mean_path(&map, path, 1);
            assert!((p.t - (p.s + p.r)).abs() < 1e-12);
        }
    }

    #[test]
    fn degeneracy_pass_and_fail() {
        // Centered product kernel passes.
        let report = check_degeneracy(
            &UKernel::Product,
            |rng| if rng.gen::<bool>() { 1.0 } else { -1.0 },
            8,
            20_000,
            5,
        )
        .unwrap();
        assert!(report.passed);

        // Sum kernel with a shifted marginal fails.
        let report = check_degeneracy(&UKernel::Sum, |rng| rng.gen::<f64>() + 0.5, 8, 20_000, 5)
            .unwrap();
        assert!(!report.passed);

        // Centered quadratic kernel: psi(x, y) = xy - c with the exact
        // cross moment subtracted stays degenerate in the mean test only
        // when c matches E[xY] = 0 per fixed x; the plain product form
        // already covers it, so check the shifted one trips.
        let report = check_degeneracy(
            &UKernel::ProductMinus { c: 0.25 },
            |rng| if rng.gen::<bool>() { 1.0 } else { -1.0 },
            4,
            20_000,
            5,
        )
        .unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn truncation_is_identity_below_threshold() {
        let batch = batch_of(&[&[0.5, -0.5, 0.25, 0.1], &[0.3, 0.2, -0.7, 0.0]]);
        let (out, ledger) = truncate_center(&batch).unwrap();
        // Threshold 2: nothing truncated. Column means are subtracted,
        // but the drop component is identically zero.
        assert!(ledger.measured_abs_shift.iter().all(|&v| v == 0.0));
        assert!(ledger.measured_sq_shift.iter().all(|&v| v == 0.0));
        for (j, col_pair) in out.paths().zip(batch.paths()).enumerate() {
            let _ = (j, col_pair);
        }
    }

    #[test]
    fn truncation_kills_constant_above_threshold() {
        // Constant g = 2 sqrt(N): truncated to zero, then centered to zero;
        // the shift magnitude 2 sqrt(N) stays under the rho/N bound.
        let n = 4;
        let big = 2.0 * (n as f64).sqrt();
        let batch = batch_of(&[&[big; 4], &[big; 4]]);
        let (out, ledger) = truncate_center(&batch).unwrap();
        for path in out.paths() {
            assert!(path.iter().all(|&v| v == 0.0));
        }
        for j in 0..n {
            // Delta is deterministic here, so E|Delta| = 0 after centering
            // the drop; the recorded raw shift bound still dominates the
            // deterministic drop magnitude.
            assert!(ledger.shift_bound[j] >= big, "bound {}", ledger.shift_bound[j]);
        }
    }

    #[test]
    fn truncation_bounds_hold_on_heavy_tails() {
        // Cubed normals have heavy tails relative to sqrt(N) at small N.
        let spec = ProcessSpec::MDependent {
            base: BaseDist::Normal,
            weights: vec![1.0],
            post_map: crate::processes::PostMap::Cube,
        };
        let batch = generate(&spec, 9, 150_000, 3).unwrap();
        let (_, ledger) = truncate_center(&batch).unwrap();
        for j in 0..9 {
            // Section-7 style bounds with MC slack: E|Delta| <= 2 rho / N
            // within noise (the displayed bound covers the one-sided drop;
            // centering can at most double it).
            assert!(
                ledger.measured_abs_shift[j] <= 2.0 * ledger.shift_bound[j] + 1e-3,
                "j={j}: measured {} vs bound {}",
                ledger.measured_abs_shift[j],
                ledger.shift_bound[j]
            );
            assert!(
                ledger.measured_sq_shift[j] <= ledger.variance_bound[j] + 1e-3,
                "j={j}: measured sq {} vs bound {}",
                ledger.measured_sq_shift[j],
                ledger.variance_bound[j]
            );
        }
    }

    #[test]
    fn moment_ingredients_on_alternating_signs() {
        let batch = batch_of(&[&[1.0, -1.0, 1.0], &[-1.0, 1.0, -1.0]]);
        let m = moment_ingredients(&batch).unwrap();
        assert!((m.rho3_max.0 - 1.0).abs() < 1e-12);
        assert!(m.rho3.iter().all(|(v, _)| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn moment_ingredients_match_gaussian_moment() {
        // E|Z|^3 = 2 sqrt(2/pi), cross-checked against the closed form
        // carried by the base distribution.
        let spec = ProcessSpec::Iid {
            base: BaseDist::Normal,
        };
        let batch = generate(&spec, 4, 200_000, 12).unwrap();
        let m = moment_ingredients(&batch).unwrap();
        let want = BaseDist::Normal.abs_moment3();
        assert!((want - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        for (j, (est, se)) in m.rho3.iter().enumerate() {
            assert!(
                (est - want).abs() <= 3.5 * se,
                "index {j}: {est} vs {want} (se {se})"
            );
        }
        // Independent columns: Var(S) = sum of column variances = 4.
        assert!((m.sigma2.0 - 4.0).abs() <= 3.5 * m.sigma2.1);
    }

    #[test]
    fn gamma_zero_for_linear_and_zero_kernel() {
        let batch = batch_of(&[&[1.0, 2.0], &[0.5, -0.5]]);
        let g = gamma_estimate(&StatisticSpec::Linear, &batch, 0.3, 64).unwrap();
        assert_eq!(g.gamma, 0.0);

        let spec = StatisticSpec::UStatistic {
            kernel: UKernel::ProductMinus { c: 0.0 },
        };
        let zero_batch = batch_of(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
        let g = gamma_estimate(&spec, &zero_batch, 0.3, 64).unwrap();
        assert_eq!(g.gamma, 0.0);
    }

    #[test]
    fn gamma_undefined_for_studentized() {
        let batch = batch_of(&[&[1.0, 2.0], &[0.5, -0.5]]);
        let spec = StatisticSpec::Studentized {
            window: WindowRule::Fixed { m: 1 },
        };
        assert!(matches!(
            gamma_estimate(&spec, &batch, 0.3, 64),
            Err(Error::UnsupportedStatistic(_))
        ));
    }

    #[test]
    fn u_increment_matches_naive_remainder_difference() {
        let spec = ProcessSpec::Iid {
            base: BaseDist::Normal,
        };
        let batch = generate(&spec, 8, 10, 19).unwrap();
        let kernel = UKernel::Product;
        for path in batch.paths() {
            for j in 1..=8usize {
                for k in j..=8usize {
                    let inc = u_increment_path(&kernel, path, j, k);
                    let hi = u_conditional_remainder_naive(&kernel, path, j, k);
                    let lo = if k == j {
                        // R_{j, j-1} = R: empty conditioning interval.
                        u_remainder_naive(&kernel, path)
                    } else {
                        u_conditional_remainder_naive(&kernel, path, j, k - 1)
                    };
                    assert!(
                        (inc - (hi - lo)).abs() < 1e-12,
                        "j={j}, k={k}: {inc} vs {}",
                        hi - lo
                    );
                }
            }
        }
    }

    #[test]
    fn gamma_exhaustive_vs_subsampled_at_tiny_n() {
        let spec = StatisticSpec::UStatistic {
            kernel: UKernel::Product,
        };
        let process = ProcessSpec::Iid {
            base: BaseDist::Rademacher,
        };
        let batch = generate(&process, 8, 500, 23).unwrap();
        let full = gamma_estimate(&spec, &batch, 0.3, usize::MAX).unwrap();
        assert!(full.exhaustive);
        let capped = gamma_estimate(&spec, &batch, 0.3, 64).unwrap();
        // The epsilon band at N=8 has at most 15 pairs, so both runs see
        // the same grid and the same maximum.
        assert!(capped.exhaustive);
        assert_eq!(full.gamma, capped.gamma);
        assert_eq!(full.argmax, capped.argmax);
    }

    #[test]
    fn window_rule_resolution() {
        assert_eq!(WindowRule::Fixed { m: 3 }.resolve(100), 3);
        let m = WindowRule::PowerOfN { exponent: 0.2 }.resolve(4096);
        assert_eq!(m, (4096f64.powf(0.2)).ceil() as usize);
    }
}
