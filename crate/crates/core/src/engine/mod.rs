//! Monte Carlo experiment engine: distance estimation, rate fitting,
//! composite bound formulas, and the replicated-experiment driver.

mod bounds;
mod config;
mod experiment;
mod kolmogorov;
mod normal;
mod ratefit;

pub use bounds::{
    remark_exponential_rhs, run_perturbation, run_perturbation_study, theorem1_rhs,
    theorem4_bound, PerturbationKind, PerturbationOutcome, PerturbationStudy,
};
pub use config::{
    BlockConstructionName, BlocksConfig, ExperimentConfig, ExperimentSection, KernelName,
    NormalizeBy, OutputConfig, ProcessConfig, ProcessKind, RateModel, StatisticConfig,
    StatisticKindName,
};
pub use experiment::{
    config_digest, render_plot_svg, render_table_csv, run_experiment, write_run_artifacts,
    BlockDiagnostics, BoundAnnotations, EngineOptions, ExperimentReport, GridRow, RunArtifacts,
    RunManifest, SigmaSource,
};
pub use kolmogorov::{dkw_band, kolmogorov_distance, DistanceEstimate};
pub use normal::{std_normal_cdf, std_normal_pdf};
pub use ratefit::{log_power_fit, rate_fit, FitOutcome, RateFit, RatePoint, RateXAxis};
