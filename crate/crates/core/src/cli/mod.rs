//! Batch driver: load a config, run controller variants concurrently, write
//! `<variant>_trace.csv` files plus `metrics.json`, and print a summary.
//!
//! Exit codes: 0 success, 1 invalid arguments or config, 2 a variant failed
//! to solve (its trace is still written, truncated).

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};

pub use config::{
    BoundsBlock, Experiment, ExperimentBlock, ExperimentConfig, HorizonsBlock, MetricsBlock, ModelBlock,
    ReferenceBlock, ScenarioBlock, SolverBlock, WeightsBlock,
};

use crate::controllers::ControllerVariant;
use crate::error::{Error, Result};
use crate::sim::{self, compute_metrics, write_trace_file, Metrics};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hmpc", version, about = "Run single-layer and hierarchical MPC variants on a demand scenario")]
pub struct Args {
    /// TOML experiment config; built-in case study when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated variants: smpc, hmpc, hmpc-passive, hmpc-robust.
    #[arg(long, value_delimiter = ',')]
    pub controller: Option<Vec<ControllerVariant>>,
    /// Override the single-layer horizon.
    #[arg(long)]
    pub horizon_smpc: Option<usize>,
    /// Output directory for traces and metrics.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One variant's outcome as stored in `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub controller: ControllerVariant,
    pub trace: String,
    pub metrics: Metrics,
    pub failure: Option<String>,
}

/// Applies command-line overrides and validates.
pub fn prepare(args: &Args) -> Result<Experiment> {
    let (mut config, base) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (ExperimentConfig::from_toml(&text)?, base)
        }
        None => (ExperimentConfig::default(), PathBuf::from(".")),
    };
    if let Some(list) = &args.controller {
        config.experiment.controllers = list.clone();
    }
    if let Some(n) = args.horizon_smpc {
        config.horizons.smpc = n;
    }
    if let Some(out) = &args.out {
        config.experiment.output = out.clone();
    }
    let mut experiment = config.build(&base)?;
    let mut seen = Vec::new();
    experiment.controllers.retain(|v| {
        let fresh = !seen.contains(v);
        seen.push(*v);
        fresh
    });
    Ok(experiment)
}

/// Runs every variant on its own thread and writes the artifacts.
pub fn run_experiment(experiment: &Experiment) -> Result<Vec<VariantReport>> {
    let out = &experiment.output;
    std::fs::create_dir_all(out)?;
    let runs: Vec<Result<VariantReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = experiment
            .controllers
            .iter()
            .map(|&variant| scope.spawn(move || run_variant(experiment, variant)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::InvalidArgument("variant thread panicked".into()))))
            .collect()
    });
    let reports = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    std::fs::write(out.join("metrics.json"), json + "\n")?;
    Ok(reports)
}

fn run_variant(experiment: &Experiment, variant: ControllerVariant) -> Result<VariantReport> {
    let trace = sim::run(&experiment.settings, variant, &experiment.scenario, &experiment.x0, experiment.duration)?;
    let name = format!("{}_trace.csv", variant.id());
    write_trace_file(&trace, &experiment.output.join(&name))?;
    Ok(VariantReport {
        controller: variant,
        trace: name,
        metrics: compute_metrics(&trace, &experiment.metrics)?,
        failure: trace.failure,
    })
}

pub fn summary_table(reports: &[VariantReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>14} {:>10} {:>10} {:>10} {:>8} {:>6}  status",
        "controller", "viol [°C·s]", "peak", "pos rms", "energy", "x1 out", "steps"
    );
    for r in reports {
        let m = &r.metrics;
        let status = match &r.failure {
            Some(f) => format!("failed: {f}"),
            None => "ok".into(),
        };
        let _ = writeln!(
            s,
            "{:<14} {:>14.6e} {:>10.4} {:>10.4} {:>10.4} {:>8} {:>6}  {status}",
            r.controller.id(),
            m.cumulative_violation,
            m.peak_violation,
            m.position_rms,
            m.energy_consumed,
            m.position_violations,
            m.steps
        );
    }
    s
}

/// Full command-line entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let experiment = match prepare(&args) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    match run_experiment(&experiment) {
        Ok(reports) => {
            print!("{}", summary_table(&reports));
            if reports.iter().any(|r| r.failure.is_some()) {
                EXIT_SOLVER
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_SOLVER
        }
    }
}
