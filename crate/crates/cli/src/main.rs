//! Config-driven command-line front end for the experiment engine.
//!
//! Exit codes: 0 success, 1 configuration error, 2 scientific violation
//! (a lemma suite found an inequality failure), so CI can gate on the
//! verification suites.

use anyhow::Context;
use clap::{Parser, Subcommand};
use mixclt::engine::{
    run_experiment, write_run_artifacts, EngineOptions, ExperimentConfig, ExperimentReport,
    FitOutcome, RunManifest,
};
use mixclt::mixing::verify::{run_lemma_suites, LemmaSuiteOptions};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Output-root override; `--out` paths are resolved under it when set.
const OUT_ROOT_ENV: &str = "MIXCLT_OUT_ROOT";

#[derive(Parser)]
#[command(name = "mixclt", version, about = "Berry-Esseen rate experiments for mixing sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the enumeration-backed inequality suites over randomized tiny
    /// chains. Exits 2 on any violation.
    VerifyLemmas {
        /// Number of randomized chains in the corpus.
        #[arg(long, default_value_t = 200)]
        chains: usize,
        /// Corpus seed.
        #[arg(long, default_value_t = 0x5eed_cafe)]
        seed: u64,
        /// Enumeration budget in path atoms.
        #[arg(long, default_value_t = 10_000_000)]
        budget: u128,
        /// Write the JSON violation report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Diagnostic: scale every certified mixing coefficient before it
        /// enters a bound (self-test of the violation detector).
        #[arg(long, default_value_t = 1.0, hide = true)]
        coefficient_scale: f64,
    },
    /// Execute an experiment config and persist its artifacts.
    Run {
        /// Path to the TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report.json, table.csv, plot.svg,
        /// manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Cap worker threads.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Merge run reports into one comparison table (CSV on stdout).
    Report {
        /// Run directories containing manifest.json.
        run_dirs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::VerifyLemmas {
            chains,
            seed,
            budget,
            out,
            coefficient_scale,
        } => cmd_verify_lemmas(chains, seed, budget, out, coefficient_scale),
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => cmd_run(&config, &out, seed, threads),
        Command::Report { run_dirs } => cmd_report(&run_dirs),
    }
}

fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

fn cmd_verify_lemmas(
    chains: usize,
    seed: u64,
    budget: u128,
    out: Option<PathBuf>,
    coefficient_scale: f64,
) -> ExitCode {
    if chains == 0 {
        eprintln!("error: --chains must be >= 1");
        return ExitCode::from(1);
    }
    if !(coefficient_scale > 0.0) {
        eprintln!("error: --coefficient-scale must be > 0");
        return ExitCode::from(1);
    }
    let opts = LemmaSuiteOptions {
        chains,
        seed,
        budget,
        coefficient_scale,
        ..LemmaSuiteOptions::default()
    };
    let report = match run_lemma_suites(&opts) {
        Ok(report) => report,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    println!(
        "checked {} chains, {} inequalities, {} violations",
        report.chains_checked,
        report.checks.total(),
        report.violations.len()
    );
    for v in report.violations.iter().take(10) {
        println!(
            "  violation [{}] chain {} ({}): lhs {:.6e} > rhs {:.6e}",
            v.suite, v.chain_index, v.detail, v.lhs, v.rhs
        );
    }
    if let Some(path) = out {
        let path = resolve_out(&path);
        match serde_json::to_string_pretty(&report)
            .map_err(anyhow::Error::from)
            .and_then(|json| std::fs::write(&path, json).map_err(anyhow::Error::from))
        {
            Ok(()) => println!("violation report written to {}", path.display()),
            Err(err) => {
                eprintln!("error writing report: {err}");
                return ExitCode::from(1);
            }
        }
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let config: ExperimentConfig = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    config.validate()?;
    Ok(config)
}

fn cmd_run(config_path: &Path, out: &Path, seed: Option<u64>, threads: Option<usize>) -> ExitCode {
    let mut config = match load_config(config_path) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("config error: {err:#}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = seed {
        config.experiment.root_seed = seed;
    }
    let out = resolve_out(out);
    let report = match run_experiment(&config, EngineOptions { threads }) {
        Ok(report) => report,
        Err(err) => {
            eprintln!("run error: {err}");
            return ExitCode::from(1);
        }
    };
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    match write_run_artifacts(&out, &report, config.output.plot) {
        Ok(artifacts) => {
            println!("run complete: {}", out.display());
            println!("  digest  {}", report.config_digest);
            match &report.fit {
                FitOutcome::Fitted(fit) => println!(
                    "  slope   {:.4} (95% CI {:.4}..{:.4}, {} points)",
                    fit.slope, fit.ci95.0, fit.ci95.1, fit.used_points
                ),
                FitOutcome::NoiseFloor => println!("  slope   n/a (noise floor)"),
                FitOutcome::TooFewPoints { usable, .. } => {
                    println!("  slope   n/a (no-fit: {usable} usable points)")
                }
            }
            println!("  report  {}", artifacts.report.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error writing artifacts: {err}");
            ExitCode::from(1)
        }
    }
}

/// One comparison row per readable run directory.
fn report_row(dir: &Path) -> anyhow::Result<String> {
    let manifest_path = dir.join("manifest.json");
    let manifest: RunManifest = serde_json::from_str(
        &std::fs::read_to_string(&manifest_path)
            .with_context(|| format!("reading {}", manifest_path.display()))?,
    )
    .with_context(|| format!("parsing {}", manifest_path.display()))?;
    if !manifest.outputs.iter().any(|o| o == "report.json") {
        anyhow::bail!("manifest lists no report.json");
    }
    let report: ExperimentReport =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json"))?)?;
    let (slope, lo, hi, status) = match &report.fit {
        FitOutcome::Fitted(fit) => (
            fit.slope.to_string(),
            fit.ci95.0.to_string(),
            fit.ci95.1.to_string(),
            "fitted".to_string(),
        ),
        FitOutcome::NoiseFloor => (String::new(), String::new(), String::new(), "noise_floor".into()),
        FitOutcome::TooFewPoints { usable, .. } => (
            String::new(),
            String::new(),
            String::new(),
            format!("no_fit_{usable}_points"),
        ),
    };
    let max_d = report
        .rows
        .iter()
        .map(|r| r.distance)
        .fold(0.0f64, f64::max);
    Ok(format!(
        "{},{},{},{},{},{},{},{},{}",
        dir.display(),
        &manifest.config_digest[..16.min(manifest.config_digest.len())],
        report.root_seed,
        report.rows.len(),
        slope,
        lo,
        hi,
        status,
        max_d
    ))
}

fn cmd_report(run_dirs: &[PathBuf]) -> ExitCode {
    if run_dirs.is_empty() {
        eprintln!("error: no run directories given");
        return ExitCode::from(1);
    }
    let mut rows = Vec::new();
    for dir in run_dirs {
        match report_row(dir) {
            Ok(row) => rows.push(row),
            Err(err) => eprintln!("warning: skipping {}: {err:#}", dir.display()),
        }
    }
    if rows.is_empty() {
        eprintln!("error: no usable runs");
        return ExitCode::from(1);
    }
    println!("run_dir,config_digest,root_seed,grid_points,slope,ci_lo,ci_hi,status,max_distance");
    for row in rows {
        println!("{row}");
    }
    ExitCode::SUCCESS
}
