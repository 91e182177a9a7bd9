//! `gridcast`: fit forecasting models on community load/generation history,
//! forecast, tabulate storage-adequacy curves and simulate grid scenarios.
//!
//! Every subcommand is deterministic given its inputs and `--seed`, exits
//! non-zero unless all outputs were written, and drops a `manifest.json`
//! describing the run next to its outputs.

mod commands;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "gridcast", version, about)]
struct Cli {
    /// Grid/partition config JSON (required by ingest and the fit commands).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; every random component derives its stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Directory for outputs and the run manifest.
    #[arg(long = "out-dir", global = true, default_value = "out")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QuantityArg {
    Demand,
    Generation,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an observation CSV and write the normalized dataset.
    Ingest {
        /// Input CSV: tau,community,demand_kw,generation_kw,temperature_c,weather.
        #[arg(long)]
        data: PathBuf,
    },
    /// Fit the long-term per-cell regressions from a validated dataset.
    FitLongterm {
        #[arg(long)]
        data: PathBuf,
        /// Which quantity to fit; generation drops the weekend/business split.
        #[arg(long, value_enum, default_value_t = QuantityArg::Both)]
        quantity: QuantityArg,
    },
    /// Fit real-time differenced AR models per community and quantity.
    FitRealtime {
        #[arg(long)]
        data: PathBuf,
        /// AR order for demand.
        #[arg(long, default_value_t = 4)]
        order: usize,
        /// AR order for generation (defaults to --order).
        #[arg(long)]
        gen_order: Option<usize>,
    },
    /// Forecast mean and variance per step from a fitted real-time model.
    Forecast {
        /// Model JSON produced by fit-realtime.
        #[arg(long)]
        model: PathBuf,
        /// CSV of recent kW values (header `kw`, most recent last).
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        horizon: usize,
        /// Long-term fit JSON supplying the drift for `kind = ar` models.
        #[arg(long)]
        mle_model: Option<PathBuf>,
        /// Feature vector x1,x2,x3,x4 for the drift prediction.
        #[arg(long)]
        features: Option<String>,
    },
    /// Tabulate adequacy lower-bound curves, optionally with Monte Carlo.
    Adequacy {
        /// Threshold margins λ in kWh, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        /// Noise variances σ² in kW², comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        sigma2s: Vec<f64>,
        /// Explicit time grid in hours, e.g. 0.5,1,2,4.
        #[arg(long, value_delimiter = ',')]
        t_grid: Option<Vec<f64>>,
        /// Build the grid t-step..=t-max instead of passing --t-grid.
        #[arg(long)]
        t_max: Option<f64>,
        /// Grid spacing in hours when using --t-max.
        #[arg(long, default_value_t = 0.5)]
        t_step: f64,
        /// Monte Carlo paths per grid point (omit to skip the empirical column).
        #[arg(long)]
        paths: Option<usize>,
        /// Euler steps per Monte Carlo path.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
    },
    /// Run a community scenario under the load-management controller.
    Simulate {
        /// Scenario JSON (communities, policies, process profiles, seed).
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    seed: u64,
    outputs: Vec<PathBuf>,
    tool_version: String,
    duration_seconds: f64,
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let started = Instant::now();
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating output directory {}", cli.out_dir.display()))?;

    let (name, inputs, outputs) = match &cli.command {
        Command::Ingest { data } => ("ingest", vec![data.clone()], commands::ingest(&cli, data)?),
        Command::FitLongterm { data, quantity } => (
            "fit-longterm",
            vec![data.clone()],
            commands::fit_longterm(&cli, data, *quantity)?,
        ),
        Command::FitRealtime {
            data,
            order,
            gen_order,
        } => (
            "fit-realtime",
            vec![data.clone()],
            commands::fit_realtime(&cli, data, *order, gen_order.unwrap_or(*order))?,
        ),
        Command::Forecast {
            model,
            history,
            horizon,
            mle_model,
            features,
        } => (
            "forecast",
            std::iter::once(model.clone())
                .chain(std::iter::once(history.clone()))
                .chain(mle_model.clone())
                .collect(),
            commands::forecast(
                &cli,
                model,
                history,
                *horizon,
                mle_model.as_deref(),
                features.as_deref(),
            )?,
        ),
        Command::Adequacy {
            lambdas,
            sigma2s,
            t_grid,
            t_max,
            t_step,
            paths,
            steps,
        } => (
            "adequacy",
            Vec::new(),
            commands::adequacy(
                &cli,
                lambdas,
                sigma2s,
                t_grid.as_deref(),
                *t_max,
                *t_step,
                *paths,
                *steps,
            )?,
        ),
        Command::Simulate { scenario } => (
            "simulate",
            vec![scenario.clone()],
            commands::simulate(&cli, scenario)?,
        ),
    };

    let manifest = RunManifest {
        command: name.to_string(),
        config: cli.config.clone(),
        inputs,
        seed: cli.seed,
        outputs,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    let manifest_path = cli.out_dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    Ok(())
}
