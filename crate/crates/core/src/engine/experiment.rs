//! Replicated-experiment driver: streams paths, estimates Kolmogorov
//! distances per grid point, fits the rate exponent, and persists the
//! report with a manifest.
//!
//! Determinism contract: the report payload is a pure function of the
//! configuration and root seed. Paths are generated on fixed chunks with
//! per-path streams and all reductions merge in chunk order, so thread
//! count never changes a byte of the output. Timestamps live only in the
//! manifest.

use super::bounds::{remark_exponential_rhs, theorem1_rhs};
use super::config::{
    BlockConstructionName, ExperimentConfig, NormalizeBy, RateModel,
};
use super::kolmogorov::kolmogorov_distance;
use super::ratefit::{log_power_fit, rate_fit, FitOutcome, RatePoint, RateXAxis};
use crate::blocks::{build_bounded_summand, build_two_step, build_with_gaps, BlockPartition};
use crate::processes::{
    exact_cov, exact_sigma2, generate, CovarianceLedger, PathSampler, Scratch,
    DEFAULT_LEDGER_ENTRY_BUDGET, PATH_CHUNK,
};
use crate::statistics::{
    function_of_mean_path, gamma_grid, moment_ingredients, studentized_path, u_increment_path,
    u_remainder_path, PathStatistic, StatisticSpec, UKernel,
};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Engine runtime options (everything scientific lives in the config).
#[derive(Debug, Clone, Copy, Default)]
pub struct EngineOptions {
    /// Cap on worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// Where a sigma value came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum SigmaSource {
    Exact,
    MonteCarlo { se: f64 },
    SelfNormalized,
}

/// One grid point of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub n: usize,
    pub sigma: f64,
    pub sigma_source: SigmaSource,
    pub distance: f64,
    pub dkw: f64,
    /// `(E|R|, se)`; absent when the variant has no remainder to report.
    pub e_abs_r: Option<(f64, f64)>,
    /// `(gamma, se)`; absent when the family is undefined for the variant.
    pub gamma: Option<(f64, f64)>,
    /// `(sup_j E|g_j|^3, se)` over the ingredient paths.
    pub rho3_max: Option<(f64, f64)>,
}

/// Bound-formula annotations carried by the report. The constants are
/// not identifiable from the rate arguments; they are fixed annotation
/// values, not fitted quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundAnnotations {
    pub a: f64,
    pub eps_p: f64,
    /// Polynomial-rate right-hand side per grid row.
    pub theorem1: Vec<f64>,
    /// Exponential-rate right-hand side per grid row.
    pub exponential_remark: Vec<f64>,
}

/// Block diagnostics for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagnostics {
    pub n: usize,
    pub k_n: usize,
    pub tau: f64,
    pub degenerate: bool,
    /// Minimum variance over non-final blocks.
    pub min_nonfinal_variance: f64,
    pub max_block_variance: f64,
    /// `(max_j E|Y_j|^3, se)` over the ingredient paths.
    pub block_moment_max: (f64, f64),
    /// Measured inter-block covariance sum and the two printed constants.
    pub inter_block: crate::blocks::InterBlockCovariance,
    /// Gap count when the gap construction ran.
    pub gap_count: usize,
    /// Recorded sub-linear growth exponent, if configured.
    pub zeta: Option<f64>,
}

/// The persisted experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_digest: String,
    pub root_seed: u64,
    pub tool_version: String,
    pub rate_model: RateModel,
    pub rate_axis: RateXAxis,
    pub rows: Vec<GridRow>,
    pub fit: FitOutcome,
    pub bounds: BoundAnnotations,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub block_diagnostics: Vec<BlockDiagnostics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Run manifest: a record of what a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub root_seed: u64,
    pub tool_version: String,
    pub created_unix_ms: u128,
    pub outputs: Vec<String>,
}

/// Files written for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub report: PathBuf,
    pub table: PathBuf,
    pub plot: Option<PathBuf>,
    pub manifest: PathBuf,
}

/// Content hash of the canonical JSON form of the config. Stable under
/// key reordering and formatting of the source document; any semantic
/// field change changes the digest.
pub fn config_digest(config: &ExperimentConfig) -> Result<String> {
    // serde_json's default map is ordered by key, so `to_value` +
    // `to_string` is canonical.
    let value = serde_json::to_value(config)?;
    let canon = serde_json::to_string(&value)?;
    let mut hasher = Sha256::new();
    hasher.update(canon.as_bytes());
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Per-path evaluator prepared once per grid point.
enum PreparedStatistic {
    Linear,
    UStat {
        kernel: UKernel,
    },
    Studentized {
        m: usize,
    },
    FunctionOfMean {
        map: crate::statistics::SmoothMap,
        d: usize,
    },
    Blocked {
        blocks: Vec<(usize, usize)>,
        gaps: Vec<(usize, usize)>,
        tau: f64,
    },
}

impl PreparedStatistic {
    fn eval(&self, path: &[f64]) -> PathStatistic {
        match self {
            PreparedStatistic::Linear => {
                let s: f64 = path.iter().sum();
                PathStatistic { t: s, s, r: 0.0 }
            }
            PreparedStatistic::UStat { kernel } => {
                let s: f64 = path.iter().sum();
                let r = u_remainder_path(kernel, path);
                PathStatistic { t: s + r, s, r }
            }
            PreparedStatistic::Studentized { m } => {
                let t = studentized_path(path, *m);
                PathStatistic { t, s: t, r: 0.0 }
            }
            PreparedStatistic::FunctionOfMean { map, d } => function_of_mean_path(map, path, *d),
            PreparedStatistic::Blocked { blocks, gaps, tau } => {
                let sum_ranges = |ranges: &[(usize, usize)]| -> f64 {
                    ranges
                        .iter()
                        .map(|&(a, b)| path[a - 1..b].iter().sum::<f64>())
                        .sum()
                };
                let s = sum_ranges(blocks) / tau;
                let r = sum_ranges(gaps) / tau;
                PathStatistic { t: s + r, s, r }
            }
        }
    }

    fn has_remainder(&self) -> bool {
        !matches!(
            self,
            PreparedStatistic::Linear | PreparedStatistic::Studentized { .. }
        )
    }
}

/// Per-chunk ingredient partials, merged in chunk order.
struct IngredientPartial {
    count: usize,
    m3: Vec<f64>,
    m6: Vec<f64>,
    gamma_pairs: Vec<(f64, f64)>,
    block_y3: Vec<(f64, f64)>,
}

impl IngredientPartial {
    fn new(n: usize, gamma_pairs: usize, blocks: usize) -> Self {
        Self {
            count: 0,
            m3: vec![0.0; n],
            m6: vec![0.0; n],
            gamma_pairs: vec![(0.0, 0.0); gamma_pairs],
            block_y3: vec![(0.0, 0.0); blocks],
        }
    }

    fn merge(&mut self, other: &IngredientPartial) {
        self.count += other.count;
        for (a, b) in self.m3.iter_mut().zip(&other.m3) {
            *a += b;
        }
        for (a, b) in self.m6.iter_mut().zip(&other.m6) {
            *a += b;
        }
        for (a, b) in self.gamma_pairs.iter_mut().zip(&other.gamma_pairs) {
            a.0 += b.0;
            a.1 += b.1;
        }
        for (a, b) in self.block_y3.iter_mut().zip(&other.block_y3) {
            a.0 += b.0;
            a.1 += b.1;
        }
    }
}

struct GridPointOutcome {
    row: GridRow,
    diagnostics: Option<BlockDiagnostics>,
}

/// Runs one grid point: streams paths, evaluates the statistic, and
/// assembles the row.
fn run_grid_point(config: &ExperimentConfig, n: usize) -> Result<GridPointOutcome> {
    let e = &config.experiment;
    let process = config.process.to_spec()?;
    let statistic = config.statistic.to_spec()?;
    let d = statistic.input_dim();
    let horizon = n * d;
    let sampler = PathSampler::new(&process, horizon)?;

    // Blocks: partition from the exact ledger plus Monte Carlo third
    // moments for the exceptional set.
    let mut ledger: Option<CovarianceLedger> = None;
    let mut partition: Option<BlockPartition> = None;
    if let Some(blocks_cfg) = &config.blocks {
        if !matches!(statistic, StatisticSpec::Linear) {
            return Err(Error::config(
                "blocks",
                "block constructions apply to the linear statistic",
            ));
        }
        let led = exact_cov(&process, n, DEFAULT_LEDGER_ENTRY_BUDGET)?;
        let part = match blocks_cfg.construction {
            BlockConstructionName::TwoStep => {
                let tau = blocks_cfg.tau.expect("validated");
                let probe_paths = e.ingredient_paths.min(2048).max(64);
                let probe = generate(&process, n, probe_paths, e.root_seed ^ 0xb10c)?;
                let moments = moment_ingredients(&probe)?;
                let m3: Vec<f64> = moments.rho3.iter().map(|(v, _)| *v).collect();
                build_two_step(&led, &m3, tau)?
            }
            BlockConstructionName::Gaps => build_with_gaps(
                &led,
                blocks_cfg.alpha_exp.expect("validated"),
                blocks_cfg.beta_exp.expect("validated"),
                led.sigma2().sqrt(),
            )?,
            BlockConstructionName::BoundedSummand => {
                build_bounded_summand(&led, blocks_cfg.a_threshold.expect("validated"))?
            }
        };
        ledger = Some(led);
        partition = Some(part);
    }

    let prepared = match (&partition, &statistic) {
        (Some(part), _) => PreparedStatistic::Blocked {
            blocks: part.blocks.clone(),
            gaps: part.gaps.clone(),
            tau: part.tau,
        },
        (None, StatisticSpec::Linear) => PreparedStatistic::Linear,
        (None, StatisticSpec::UStatistic { kernel }) => PreparedStatistic::UStat {
            kernel: *kernel,
        },
        (None, StatisticSpec::Studentized { window }) => PreparedStatistic::Studentized {
            m: window.resolve(n),
        },
        (None, StatisticSpec::FunctionOfMean { map }) => PreparedStatistic::FunctionOfMean {
            map: map.clone(),
            d,
        },
    };

    // Gamma grid (U-statistic only).
    let gamma_pairs: Vec<(usize, usize)> = match &statistic {
        StatisticSpec::UStatistic { .. } if partition.is_none() => {
            gamma_grid(n, e.gamma_epsilon, e.gamma_grid).0
        }
        _ => Vec::new(),
    };
    let gamma_kernel = match &statistic {
        StatisticSpec::UStatistic { kernel } => Some(*kernel),
        _ => None,
    };

    let ingredient_paths = e.ingredient_paths.min(e.n_paths);
    let n_blocks_for_moments = partition.as_ref().map(|p| p.k_n()).unwrap_or(0);
    let block_ranges = partition.as_ref().map(|p| p.blocks.clone()).unwrap_or_default();
    let block_tau = partition.as_ref().map(|p| p.tau).unwrap_or(1.0);

    // Stream the paths in fixed chunks.
    let n_chunks = e.n_paths.div_ceil(PATH_CHUNK);
    let chunk_results: Vec<(Vec<PathStatistic>, IngredientPartial)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk_idx| {
            let mut scratch = Scratch::default();
            let mut buf = vec![0.0; horizon];
            let lo = chunk_idx * PATH_CHUNK;
            let hi = ((chunk_idx + 1) * PATH_CHUNK).min(e.n_paths);
            let mut stats = Vec::with_capacity(hi - lo);
            let mut partial =
                IngredientPartial::new(horizon, gamma_pairs.len(), n_blocks_for_moments);
            for path_idx in lo..hi {
                sampler.fill_path(e.root_seed, path_idx as u64, &mut buf, &mut scratch);
                stats.push(prepared.eval(&buf));
                if path_idx < ingredient_paths {
                    partial.count += 1;
                    for (j, &v) in buf.iter().enumerate() {
                        let a3 = v.abs().powi(3);
                        partial.m3[j] += a3;
                        partial.m6[j] += a3 * a3;
                    }
                    if let Some(kernel) = &gamma_kernel {
                        for (pi, &(j, k)) in gamma_pairs.iter().enumerate() {
                            let dv = u_increment_path(kernel, &buf, j, k).abs().powf(1.5);
                            partial.gamma_pairs[pi].0 += dv;
                            partial.gamma_pairs[pi].1 += dv * dv;
                        }
                    }
                    for (bi, &(a, b)) in block_ranges.iter().enumerate() {
                        let z: f64 = buf[a - 1..b].iter().sum();
                        let y3 = (z / block_tau).abs().powi(3);
                        partial.block_y3[bi].0 += y3;
                        partial.block_y3[bi].1 += y3 * y3;
                    }
                }
            }
            (stats, partial)
        })
        .collect();

    let mut path_stats = Vec::with_capacity(e.n_paths);
    let mut ingredients =
        IngredientPartial::new(horizon, gamma_pairs.len(), n_blocks_for_moments);
    for (stats, partial) in &chunk_results {
        path_stats.extend_from_slice(stats);
        ingredients.merge(partial);
    }
    drop(chunk_results);

    // Normalization.
    let np = e.n_paths as f64;
    let mc_sd = |values: &dyn Fn(&PathStatistic) -> f64| -> (f64, f64) {
        let mean = path_stats.iter().map(|p| values(p)).sum::<f64>() / np;
        let var = path_stats
            .iter()
            .map(|p| {
                let v = values(p) - mean;
                v * v
            })
            .sum::<f64>()
            / np;
        let m4 = path_stats
            .iter()
            .map(|p| {
                let v = values(p) - mean;
                v * v * v * v
            })
            .sum::<f64>()
            / np;
        (var, ((m4 - var * var).max(0.0) / np).sqrt())
    };
    let (sigma, sigma_source) = match (&prepared, e.normalize_by) {
        (PreparedStatistic::Studentized { .. }, _) => (1.0, SigmaSource::SelfNormalized),
        (_, NormalizeBy::SdT) => {
            let (var, se) = mc_sd(&|p: &PathStatistic| p.t);
            (var.sqrt(), SigmaSource::MonteCarlo { se })
        }
        (PreparedStatistic::Blocked { blocks, tau, .. }, NormalizeBy::LinearPart) => {
            let led = ledger.as_ref().expect("blocked runs carry a ledger");
            let all: Vec<usize> = blocks.iter().flat_map(|&(a, b)| a..=b).collect();
            let var = led.var_indices(&all) / (tau * tau);
            (var.sqrt(), SigmaSource::Exact)
        }
        (_, NormalizeBy::LinearPart) => match exact_sigma2(&process, horizon) {
            Ok(var) => (var.sqrt(), SigmaSource::Exact),
            Err(Error::LedgerUnavailable(_)) => {
                let (var, se) = mc_sd(&|p: &PathStatistic| p.s);
                (var.sqrt(), SigmaSource::MonteCarlo { se })
            }
            Err(other) => return Err(other),
        },
    };
    if sigma * sigma < e.sigma_floor {
        return Err(Error::VarianceFloor {
            got: sigma * sigma,
            floor: e.sigma_floor,
        });
    }

    // Distance.
    let samples: Vec<f64> = path_stats.iter().map(|p| p.t / sigma).collect();
    let est = kolmogorov_distance(&samples, e.dkw_level)?;

    // Ingredients.
    let e_abs_r = if prepared.has_remainder() {
        let mean = path_stats.iter().map(|p| p.r.abs()).sum::<f64>() / np;
        let var = path_stats
            .iter()
            .map(|p| {
                let v = p.r.abs() - mean;
                v * v
            })
            .sum::<f64>()
            / np;
        Some((mean, (var / np).sqrt()))
    } else {
        None
    };
    let rho3_max = if ingredients.count > 0 {
        let cnt = ingredients.count as f64;
        let per_index: Vec<(f64, f64)> = (0..horizon)
            .map(|j| {
                let mean = ingredients.m3[j] / cnt;
                let var = (ingredients.m6[j] / cnt - mean * mean).max(0.0);
                (mean, (var / cnt).sqrt())
            })
            .collect();
        per_index
            .into_iter()
            .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"))
    } else {
        None
    };
    let gamma = match &statistic {
        StatisticSpec::Linear => Some((0.0, 0.0)),
        StatisticSpec::UStatistic { .. } if !gamma_pairs.is_empty() && ingredients.count > 0 => {
            let cnt = ingredients.count as f64;
            let mut best = (0.0f64, 0.0f64);
            for &(sum, sq) in &ingredients.gamma_pairs {
                let mean = sum / cnt;
                let var = (sq / cnt - mean * mean).max(0.0);
                if mean > best.0 {
                    best = (mean, (var / cnt).sqrt());
                }
            }
            let g = best.0.powf(2.0 / 3.0);
            let se = if best.0 > 0.0 {
                (2.0 / 3.0) * best.0.powf(-1.0 / 3.0) * best.1
            } else {
                0.0
            };
            Some((g, se))
        }
        _ => None,
    };

    // Block diagnostics.
    let diagnostics = partition.as_ref().map(|part| {
        let led = ledger.as_ref().expect("blocked runs carry a ledger");
        let cnt = ingredients.count.max(1) as f64;
        let block_moments: Vec<(f64, f64)> = ingredients
            .block_y3
            .iter()
            .map(|&(sum, sq)| {
                let mean = sum / cnt;
                let var = (sq / cnt - mean * mean).max(0.0);
                (mean, (var / cnt).sqrt())
            })
            .collect();
        let block_moment_max = block_moments
            .iter()
            .copied()
            .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"))
            .unwrap_or((0.0, 0.0));
        let c_mix_level = config
            .process
            .to_spec()
            .and_then(|s| s.certified_phi_profile(n, 1))
            .map(|p| p.bound_at(1))
            .unwrap_or(1.0);
        let inter_block = crate::blocks::inter_block_covariance_sum(
            part,
            led,
            block_moment_max.0.max(1.0),
            c_mix_level,
        );
        let nonfinal = &part.per_block_variance[..part.per_block_variance.len().max(1) - 1];
        BlockDiagnostics {
            n,
            k_n: part.k_n(),
            tau: part.tau,
            degenerate: part.degenerate,
            min_nonfinal_variance: nonfinal.iter().copied().fold(f64::INFINITY, f64::min),
            max_block_variance: part
                .per_block_variance
                .iter()
                .copied()
                .fold(0.0, f64::max),
            block_moment_max,
            inter_block,
            gap_count: part.gaps.len(),
            zeta: config.blocks.as_ref().and_then(|b| b.zeta),
        }
    });

    Ok(GridPointOutcome {
        row: GridRow {
            n,
            sigma,
            sigma_source,
            distance: est.distance,
            dkw: est.dkw,
            e_abs_r,
            gamma,
            rho3_max,
        },
        diagnostics,
    })
}

/// Runs the whole experiment described by `config`.
pub fn run_experiment(
    config: &ExperimentConfig,
    options: EngineOptions,
) -> Result<ExperimentReport> {
    config.validate()?;
    match options.threads {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            pool.install(|| run_experiment_inner(config))
        }
        None => run_experiment_inner(config),
    }
}

fn run_experiment_inner(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let e = &config.experiment;
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let mut warnings = Vec::new();
    for &n in &e.n_grid {
        match run_grid_point(config, n) {
            Ok(outcome) => {
                rows.push(outcome.row);
                if let Some(d) = outcome.diagnostics {
                    diagnostics.push(d);
                }
            }
            Err(err) => warnings.push(format!("grid point N={n} aborted: {err}")),
        }
    }

    let points: Vec<RatePoint> = rows
        .iter()
        .map(|row| RatePoint {
            x: match e.rate_axis {
                RateXAxis::Horizon => row.n as f64,
                RateXAxis::Sigma => row.sigma,
            },
            distance: row.distance,
            dkw: row.dkw,
        })
        .collect();
    let fit = if points.len() < 3 {
        warnings.push(format!(
            "no-fit: only {} valid grid points (need 3)",
            points.len()
        ));
        FitOutcome::TooFewPoints {
            usable: points.len(),
            excluded: Vec::new(),
        }
    } else {
        match e.rate_model {
            RateModel::Polynomial => rate_fit(&points)?,
            RateModel::ExponentialLogPower => log_power_fit(&points)?,
        }
    };
    if matches!(fit, FitOutcome::NoiseFloor) {
        warnings.push("distance indistinguishable from MC noise at every grid point".into());
    }

    // Fixed annotation constants; the fit, not these, carries the result.
    let (a, eps_p) = (1.0, 0.05);
    let bounds = BoundAnnotations {
        a,
        eps_p,
        theorem1: rows
            .iter()
            .map(|r| {
                theorem1_rhs(
                    a,
                    eps_p,
                    r.n as f64,
                    r.e_abs_r.map(|v| v.0).unwrap_or(0.0),
                    r.gamma.map(|v| v.0).unwrap_or(0.0),
                )
            })
            .collect(),
        exponential_remark: rows
            .iter()
            .map(|r| {
                remark_exponential_rhs(
                    a,
                    (r.n as f64).max(2.0),
                    r.e_abs_r.map(|v| v.0).unwrap_or(0.0),
                    r.gamma.map(|v| v.0).unwrap_or(0.0),
                )
            })
            .collect(),
    };

    Ok(ExperimentReport {
        config_digest: config_digest(config)?,
        root_seed: e.root_seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        rate_model: e.rate_model,
        rate_axis: e.rate_axis,
        rows,
        fit,
        bounds,
        block_diagnostics: diagnostics,
        warnings,
    })
}

/// Renders the CSV table `(N, sigma_N, D_N, dkw, E_R, gamma)`.
pub fn render_table_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("N,sigma_N,D_N,dkw,E_R,gamma\n");
    for row in &report.rows {
        let er = row
            .e_abs_r
            .map(|(v, _)| v.to_string())
            .unwrap_or_default();
        let gamma = row.gamma.map(|(v, _)| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.n, row.sigma, row.distance, row.dkw, er, gamma
        ));
    }
    out
}

/// Renders a minimal log-log SVG scatter of `D_N` against the rate axis,
/// with the fitted line when one exists.
pub fn render_plot_svg(report: &ExperimentReport) -> String {
    let (w, h, margin) = (640.0, 480.0, 60.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    let pts: Vec<(f64, f64)> = report
        .rows
        .iter()
        .map(|r| {
            let x = match report.rate_axis {
                RateXAxis::Horizon => r.n as f64,
                RateXAxis::Sigma => r.sigma,
            };
            (x.ln(), r.distance.max(1e-300).ln())
        })
        .collect();
    if pts.len() >= 2 {
        let (x_min, x_max) = pts
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.0), hi.max(p.0))
            });
        let (y_min, y_max) = pts
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.1), hi.max(p.1))
            });
        let spread = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
        let sx = (w - 2.0 * margin) / spread(x_min, x_max);
        let sy = (h - 2.0 * margin) / spread(y_min, y_max);
        let px = |x: f64| margin + (x - x_min) * sx;
        let py = |y: f64| h - margin - (y - y_min) * sy;
        svg.push_str(&format!(
            "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
            m = margin,
            b = h - margin,
            r = w - margin
        ));
        if let FitOutcome::Fitted(fit) = &report.fit {
            let y0 = fit.intercept + fit.slope * x_min;
            let y1 = fit.intercept + fit.slope * x_max;
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"steelblue\" \
                 stroke-width=\"1.5\"/>\n",
                px(x_min),
                py(y0),
                px(x_max),
                py(y1)
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"14\">slope {:.4}</text>\n",
                margin + 8.0,
                margin - 8.0,
                fit.slope
            ));
        }
        for p in &pts {
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"crimson\"/>\n",
                px(p.0),
                py(p.1)
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes `report.json`, `table.csv`, optional `plot.svg`, and
/// `manifest.json` into `out_dir`. Files land atomically (temp + rename)
/// and partial outputs are removed if any step fails.
pub fn write_run_artifacts(
    out_dir: &Path,
    report: &ExperimentReport,
    plot: bool,
) -> Result<RunArtifacts> {
    std::fs::create_dir_all(out_dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<RunArtifacts> {
        let report_path = out_dir.join("report.json");
        write_atomic(&report_path, &serde_json::to_string_pretty(report)?)?;
        written.push(report_path.clone());

        let table_path = out_dir.join("table.csv");
        write_atomic(&table_path, &render_table_csv(report))?;
        written.push(table_path.clone());

        let plot_path = if plot {
            let p = out_dir.join("plot.svg");
            write_atomic(&p, &render_plot_svg(report))?;
            written.push(p.clone());
            Some(p)
        } else {
            None
        };

        let manifest_path = out_dir.join("manifest.json");
        let mut outputs: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        outputs.push("manifest.json".into());
        let manifest = RunManifest {
            config_digest: report.config_digest.clone(),
            root_seed: report.root_seed,
            tool_version: report.tool_version.clone(),
            created_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            outputs,
        };
        write_atomic(&manifest_path, &serde_json::to_string_pretty(&manifest)?)?;
        written.push(manifest_path.clone());

        Ok(RunArtifacts {
            report: report_path,
            table: table_path,
            plot: plot_path,
            manifest: manifest_path,
        })
    })();
    if result.is_err() {
        for path in written {
            let _ = std::fs::remove_file(path);
        }
    }
    result
}
