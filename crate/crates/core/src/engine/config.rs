//! Experiment configuration: the validated schema behind the config file.
//!
//! The file format is structured tables and keys (TOML through the CLI,
//! JSON accepted programmatically); this module owns the schema and the
//! conversion into runtime specs, reporting violations with a path to the
//! offending field.

use crate::mixing::StochasticMatrix;
use crate::processes::{BaseDist, PairLink, PostMap, ProcessSpec, ScaleSchedule};
use crate::statistics::{SmoothMap, StatisticSpec, UKernel, WindowRule};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Rate model for the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `D ~ N^slope`.
    Polynomial,
    /// `D ~ N^(-1/2) (log N)^q`.
    ExponentialLogPower,
}

/// What the distance samples are normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeBy {
    /// `sigma_N = sd(S)`, the linear part (the main theorem's scaling).
    LinearPart,
    /// `sd(T)`, for perturbation-style experiments.
    SdT,
}

fn default_dkw_level() -> f64 {
    0.99
}

fn default_ingredient_paths() -> usize {
    4096
}

fn default_gamma_epsilon() -> f64 {
    0.3
}

fn default_gamma_grid() -> usize {
    64
}

fn default_rate_model() -> RateModel {
    RateModel::Polynomial
}

fn default_rate_axis() -> super::ratefit::RateXAxis {
    super::ratefit::RateXAxis::Horizon
}

fn default_normalize() -> NormalizeBy {
    NormalizeBy::LinearPart
}

fn default_sigma_floor() -> f64 {
    1e-9
}

/// `[experiment]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub root_seed: u64,
    pub n_grid: Vec<usize>,
    pub n_paths: usize,
    /// Paths used for the moment/gamma ingredient estimates.
    #[serde(default = "default_ingredient_paths")]
    pub ingredient_paths: usize,
    #[serde(default = "default_rate_model")]
    pub rate_model: RateModel,
    #[serde(default = "default_rate_axis")]
    pub rate_axis: super::ratefit::RateXAxis,
    #[serde(default = "default_dkw_level")]
    pub dkw_level: f64,
    #[serde(default = "default_normalize")]
    pub normalize_by: NormalizeBy,
    /// Assumption-4 style positivity floor for `sigma_N^2`.
    #[serde(default = "default_sigma_floor")]
    pub sigma_floor: f64,
    #[serde(default = "default_gamma_epsilon")]
    pub gamma_epsilon: f64,
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: usize,
}

/// `[process]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessKind {
    Iid {
        base: BaseDist,
    },
    MDependent {
        base: BaseDist,
        weights: Vec<f64>,
        #[serde(default = "default_identity_map")]
        post_map: PostMap,
    },
    Markov {
        initial_law: Vec<f64>,
        /// Step matrices as row lists, cycled along the horizon.
        step_matrices: Vec<Vec<Vec<f64>>>,
        state_values: Vec<f64>,
    },
    /// Pair-coupled signs with `phi(m) = min(1/2, K m^-p)`.
    PolynomialMixing {
        p: f64,
        k: f64,
        max_lag: u32,
    },
    CoupledPairs {
        links: Vec<PairLink>,
    },
}

fn default_identity_map() -> PostMap {
    PostMap::Identity
}

// No deny_unknown_fields here: it cannot coexist with the flattened
// process kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessConfig {
    #[serde(flatten)]
    pub kind: ProcessKind,
    /// Optional non-stationarity schedule applied on top.
    #[serde(default)]
    pub scale: Option<ScaleSchedule>,
}

impl ProcessConfig {
    pub fn to_spec(&self) -> Result<ProcessSpec> {
        let inner = match &self.kind {
            ProcessKind::Iid { base } => ProcessSpec::Iid { base: *base },
            ProcessKind::MDependent {
                base,
                weights,
                post_map,
            } => ProcessSpec::MDependent {
                base: *base,
                weights: weights.clone(),
                post_map: *post_map,
            },
            ProcessKind::Markov {
                initial_law,
                step_matrices,
                state_values,
            } => {
                let mats: Result<Vec<StochasticMatrix>> = step_matrices
                    .iter()
                    .map(|rows| {
                        StochasticMatrix::from_rows(rows).map_err(|e| {
                            Error::config("process.step_matrices", e.to_string())
                        })
                    })
                    .collect();
                ProcessSpec::InhomogeneousMarkov {
                    initial_law: initial_law.clone(),
                    step_matrices: mats?,
                    state_values: state_values.clone(),
                }
            }
            ProcessKind::PolynomialMixing { p, k, max_lag } => {
                crate::processes::polynomial_mixing_schedule(*p, *k, *max_lag)
                    .map_err(|e| Error::config("process", e.to_string()))?
            }
            ProcessKind::CoupledPairs { links } => ProcessSpec::CoupledPairs {
                links: links.clone(),
            },
        };
        Ok(match &self.scale {
            Some(schedule) => ProcessSpec::ScaledSchedule {
                inner: Box::new(inner),
                schedule: schedule.clone(),
            },
            None => inner,
        })
    }
}

/// `[statistic]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticConfig {
    pub kind: StatisticKindName,
    /// U-statistic kernel name.
    #[serde(default)]
    pub kernel: Option<KernelName>,
    /// Offset for the `product_minus` kernel.
    #[serde(default)]
    pub kernel_offset: Option<f64>,
    /// Fixed studentizing window.
    #[serde(default)]
    pub window: Option<usize>,
    /// Window rule `m = ceil(N^window_exponent)`; overrides `window`.
    #[serde(default)]
    pub window_exponent: Option<f64>,
    /// Linear part of the smooth map (function-of-mean).
    #[serde(default)]
    pub linear: Option<Vec<f64>>,
    /// Quadratic part of the smooth map (function-of-mean).
    #[serde(default)]
    pub quadratic: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKindName {
    Linear,
    UStatistic,
    Studentized,
    FunctionOfMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    Product,
    Sum,
    ProductMinus,
}

impl StatisticConfig {
    pub fn to_spec(&self) -> Result<StatisticSpec> {
        let spec = match self.kind {
            StatisticKindName::Linear => StatisticSpec::Linear,
            StatisticKindName::UStatistic => {
                let kernel = match self.kernel.ok_or_else(|| {
                    Error::config("statistic.kernel", "u_statistic needs a kernel")
                })? {
                    KernelName::Product => UKernel::Product,
                    KernelName::Sum => UKernel::Sum,
                    KernelName::ProductMinus => UKernel::ProductMinus {
                        c: self.kernel_offset.ok_or_else(|| {
                            Error::config(
                                "statistic.kernel_offset",
                                "product_minus needs an offset",
                            )
                        })?,
                    },
                };
                StatisticSpec::UStatistic { kernel }
            }
            StatisticKindName::Studentized => {
                let window = match (self.window_exponent, self.window) {
                    (Some(e), _) => WindowRule::PowerOfN { exponent: e },
                    (None, Some(m)) => WindowRule::Fixed { m },
                    (None, None) => {
                        return Err(Error::config(
                            "statistic.window",
                            "studentized needs window or window_exponent",
                        ))
                    }
                };
                StatisticSpec::Studentized { window }
            }
            StatisticKindName::FunctionOfMean => {
                let linear = self.linear.clone().ok_or_else(|| {
                    Error::config("statistic.linear", "function_of_mean needs a linear part")
                })?;
                let d = linear.len();
                let quadratic = self
                    .quadratic
                    .clone()
                    .unwrap_or_else(|| vec![vec![0.0; d]; d]);
                StatisticSpec::FunctionOfMean {
                    map: SmoothMap { linear, quadratic },
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// `[blocks]` table (optional).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocksConfig {
    pub construction: BlockConstructionName,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub alpha_exp: Option<f64>,
    #[serde(default)]
    pub beta_exp: Option<f64>,
    #[serde(default)]
    pub a_threshold: Option<f64>,
    /// Sub-linear variance growth exponent; recorded in the report (it
    /// enters no computation here and must be set deliberately).
    #[serde(default)]
    pub zeta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockConstructionName {
    TwoStep,
    Gaps,
    BoundedSummand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Write the log-log SVG plot.
    #[serde(default)]
    pub plot: bool,
}

/// The whole experiment document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub process: ProcessConfig,
    pub statistic: StatisticConfig,
    #[serde(default)]
    pub blocks: Option<BlocksConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Validates cross-field constraints and the embedded specs.
    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.n_grid.is_empty() {
            return Err(Error::config("experiment.n_grid", "must be nonempty"));
        }
        if !e.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config(
                "experiment.n_grid",
                "must be strictly increasing",
            ));
        }
        if e.n_paths < 1000 {
            return Err(Error::config(
                "experiment.n_paths",
                "distance estimation needs >= 1000 paths",
            ));
        }
        if !(0.5..1.0).contains(&e.dkw_level) {
            return Err(Error::config(
                "experiment.dkw_level",
                "must be in [0.5, 1)",
            ));
        }
        if !(e.gamma_epsilon > 0.0) {
            return Err(Error::config("experiment.gamma_epsilon", "must be > 0"));
        }
        let spec = self.process.to_spec()?;
        for &n in &e.n_grid {
            spec.validate(n)
                .map_err(|err| Error::config("process", err.to_string()))?;
        }
        self.statistic.to_spec()?;
        if let Some(blocks) = &self.blocks {
            match blocks.construction {
                BlockConstructionName::TwoStep if blocks.tau.is_none() => {
                    return Err(Error::config("blocks.tau", "two_step needs tau"));
                }
                BlockConstructionName::Gaps => {
                    if blocks.alpha_exp.is_none() || blocks.beta_exp.is_none() {
                        return Err(Error::config(
                            "blocks.alpha_exp",
                            "gaps needs alpha_exp and beta_exp",
                        ));
                    }
                }
                BlockConstructionName::BoundedSummand if blocks.a_threshold.is_none() => {
                    return Err(Error::config(
                        "blocks.a_threshold",
                        "bounded_summand needs a_threshold",
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "experiment": {
                "root_seed": 42,
                "n_grid": [128, 256, 512],
                "n_paths": 2000
            },
            "process": { "kind": "iid", "base": { "dist": "normal" } },
            "statistic": { "kind": "linear" }
        })
    }

    #[test]
    fn minimal_config_parses_and_validates() {
        let config: ExperimentConfig = serde_json::from_value(minimal_json()).unwrap();
        config.validate().unwrap();
        assert_eq!(config.experiment.dkw_level, 0.99);
        assert_eq!(config.experiment.ingredient_paths, 4096);
    }

    #[test]
    fn grid_must_increase() {
        let mut v = minimal_json();
        v["experiment"]["n_grid"] = serde_json::json!([128, 128, 256]);
        let config: ExperimentConfig = serde_json::from_value(v).unwrap();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("n_grid"));
    }

    #[test]
    fn too_few_paths_rejected() {
        let mut v = minimal_json();
        v["experiment"]["n_paths"] = serde_json::json!(10);
        let config: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_schema_violations() {
        let mut v = minimal_json();
        v["experiment"]["typo_field"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
    }

    #[test]
    fn statistic_configs_resolve() {
        let u = StatisticConfig {
            kind: StatisticKindName::UStatistic,
            kernel: Some(KernelName::Product),
            kernel_offset: None,
            window: None,
            window_exponent: None,
            linear: None,
            quadratic: None,
        };
        assert!(matches!(
            u.to_spec().unwrap(),
            StatisticSpec::UStatistic {
                kernel: UKernel::Product
            }
        ));
        let s = StatisticConfig {
            kind: StatisticKindName::Studentized,
            kernel: None,
            kernel_offset: None,
            window: None,
            window_exponent: Some(0.2),
            linear: None,
            quadratic: None,
        };
        assert!(s.to_spec().is_ok());
        let missing = StatisticConfig {
            kind: StatisticKindName::UStatistic,
            kernel: None,
            kernel_offset: None,
            window: None,
            window_exponent: None,
            linear: None,
            quadratic: None,
        };
        let err = missing.to_spec().unwrap_err();
        assert!(err.to_string().contains("statistic.kernel"));
    }

    #[test]
    fn markov_config_round_trip() {
        let v = serde_json::json!({
            "kind": "markov",
            "initial_law": [0.5, 0.5],
            "step_matrices": [[[0.7, 0.3], [0.2, 0.8]]],
            "state_values": [1.0, -1.0]
        });
        let config: ProcessConfig = serde_json::from_value(v).unwrap();
        let spec = config.to_spec().unwrap();
        assert!(spec.validate(16).is_ok());
    }

    #[test]
    fn polynomial_mixing_config_builds_links() {
        let v = serde_json::json!({
            "kind": "polynomial_mixing",
            "p": 3.0, "k": 1.0, "max_lag": 8,
            "scale": { "kind": "affine", "intercept": 1.0, "slope": 1.0 }
        });
        let config: ProcessConfig = serde_json::from_value(v).unwrap();
        let spec = config.to_spec().unwrap();
        assert!(matches!(spec, ProcessSpec::ScaledSchedule { .. }));
    }
}
