use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use gridcast_core::adequacy::AdequacyCurve;
use gridcast_core::arima::{fit_diff_ar, multi_step, multi_step_ar, RealtimeModel};
use gridcast_core::mle::{build_design, fit_mle, predict};
use gridcast_core::simulator::{run_scenario, Scenario};
use gridcast_core::timegrid::{
    aggregate_segment, group_by_key, load_csv, CellFamily, GridConfig, Observation, Quantity,
    TrainingRow,
};
use gridcast_core::{curve_table, Error as CoreError};

use crate::{Cli, QuantityArg};

fn read_config(cli: &Cli) -> Result<GridConfig> {
    let path = cli
        .config
        .as_ref()
        .context("this subcommand needs --config <grid config JSON>")?;
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let config: GridConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    config.validate()?;
    Ok(config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct IngestSummary {
    rows: usize,
    communities: usize,
    cells_populated: usize,
}

pub fn ingest(cli: &Cli, data: &Path) -> Result<Vec<PathBuf>> {
    let config = read_config(cli)?;
    let observations = load_csv(data, &config)?;

    let communities: std::collections::BTreeSet<u32> =
        observations.iter().map(|o| o.community).collect();
    let cells = group_by_key(&observations, &config)?;
    let summary = IngestSummary {
        rows: observations.len(),
        communities: communities.len(),
        cells_populated: cells.len(),
    };

    let dataset_path = cli.out_dir.join("dataset.csv");
    let mut out = String::from("tau,community,demand_kw,generation_kw,temperature_c,weather\n");
    for o in &observations {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            o.tau, o.community, o.demand_kw, o.generation_kw, o.temperature_c, o.weather
        ));
    }
    fs::write(&dataset_path, out)?;

    let summary_path = cli.out_dir.join("ingest_summary.json");
    write_json(&summary_path, &summary)?;
    println!(
        "ingested {} rows, {} communities, {} populated cells",
        summary.rows, summary.communities, summary.cells_populated
    );
    Ok(vec![dataset_path, summary_path])
}

// ---------------------------------------------------------------------------
// fit-longterm
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SkippedCell {
    cell: String,
    rows: usize,
    reason: String,
}

pub fn fit_longterm(cli: &Cli, data: &Path, quantity: QuantityArg) -> Result<Vec<PathBuf>> {
    let config = read_config(cli)?;
    let observations = load_csv(data, &config)?;
    let mut outputs = Vec::new();

    let quantities: &[Quantity] = match quantity {
        QuantityArg::Demand => &[Quantity::Demand],
        QuantityArg::Generation => &[Quantity::Generation],
        QuantityArg::Both => &[Quantity::Demand, Quantity::Generation],
    };

    for &q in quantities {
        // Generation carries no weekly usage pattern; drop the split.
        let cfg = match q {
            Quantity::Demand => config.clone(),
            Quantity::Generation => config.without_week_split(),
        };
        let dir = cli.out_dir.join("longterm").join(q.to_string());
        fs::create_dir_all(&dir)?;

        // One training row per populated cell, grouped by cell family.
        let mut families: BTreeMap<CellFamily, Vec<TrainingRow>> = BTreeMap::new();
        for (key, segment) in group_by_key(&observations, &cfg)? {
            let row = aggregate_segment(&segment, q, &cfg)?;
            families.entry(key.family()).or_default().push(row);
        }

        let mut fitted = 0usize;
        let mut skipped = Vec::new();
        for (family, rows) in families {
            let fit = build_design(&rows).and_then(|d| fit_mle(&d, family.to_string()));
            match fit {
                Ok(fit) => {
                    let path = dir.join(format!("{family}.json"));
                    write_json(&path, &fit)?;
                    outputs.push(path);
                    fitted += 1;
                }
                Err(err @ (CoreError::TooFewRows { .. } | CoreError::SingularDesign { .. })) => {
                    skipped.push(SkippedCell {
                        cell: family.to_string(),
                        rows: rows.len(),
                        reason: err.to_string(),
                    });
                }
                Err(other) => return Err(other.into()),
            }
        }

        let skipped_path = dir.join("skipped.json");
        write_json(&skipped_path, &skipped)?;
        outputs.push(skipped_path);
        println!(
            "{q}: fitted {fitted} cell families, skipped {}",
            skipped.len()
        );
        for cell in &skipped {
            println!(
                "  skipped {} ({} rows): {}",
                cell.cell, cell.rows, cell.reason
            );
        }
    }
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// fit-realtime
// ---------------------------------------------------------------------------

pub fn fit_realtime(
    cli: &Cli,
    data: &Path,
    order: usize,
    gen_order: usize,
) -> Result<Vec<PathBuf>> {
    let config = read_config(cli)?;
    let observations = load_csv(data, &config)?;

    let mut by_community: BTreeMap<u32, Vec<&Observation>> = BTreeMap::new();
    for obs in &observations {
        by_community.entry(obs.community).or_default().push(obs);
    }
    if by_community.is_empty() {
        bail!("dataset {} holds no observations", data.display());
    }

    let dir = cli.out_dir.join("realtime");
    fs::create_dir_all(&dir)?;
    let mut outputs = Vec::new();
    for (community, rows) in by_community {
        for (quantity, a) in [(Quantity::Demand, order), (Quantity::Generation, gen_order)] {
            let series: Vec<f64> = rows.iter().map(|o| quantity.of(o)).collect();
            let model = fit_diff_ar(&series, a).with_context(|| {
                format!("fitting {quantity} for community {community} (order {a})")
            })?;
            if !model.is_stationary() {
                eprintln!(
                    "warning: {quantity} fit for community {community} violates the \
                     stationarity root condition; forecasts may diverge"
                );
            }
            let path = dir.join(format!("q{community}-{quantity}.json"));
            write_json(&path, &RealtimeModel::from(&model))?;
            outputs.push(path);
        }
        println!("community {community}: fitted demand (a={order}) and generation (a={gen_order})");
    }
    Ok(outputs)
}

// ---------------------------------------------------------------------------
// forecast
// ---------------------------------------------------------------------------

fn read_history(path: &Path) -> Result<Vec<f64>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading history {}", path.display()))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line == "kw") {
            continue;
        }
        values.push(
            line.parse::<f64>()
                .with_context(|| format!("history line {}: '{line}' is not a number", i + 1))?,
        );
    }
    if values.is_empty() {
        bail!("history {} holds no values", path.display());
    }
    Ok(values)
}

fn parse_features(text: &str) -> Result<[f64; 4]> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing features '{text}'"))?;
    if parts.len() != 4 {
        bail!(
            "--features needs exactly x1,x2,x3,x4 (got {} values)",
            parts.len()
        );
    }
    Ok([parts[0], parts[1], parts[2], parts[3]])
}

pub fn forecast(
    cli: &Cli,
    model_path: &Path,
    history_path: &Path,
    horizon: usize,
    mle_model: Option<&Path>,
    features: Option<&str>,
) -> Result<Vec<PathBuf>> {
    if horizon == 0 {
        bail!("--horizon must be at least 1");
    }
    let text = fs::read_to_string(model_path)
        .with_context(|| format!("reading model {}", model_path.display()))?;
    let model: RealtimeModel =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", model_path.display()))?;
    let history = read_history(history_path)?;

    let mut rows = Vec::with_capacity(horizon);
    match model {
        RealtimeModel::DiffAr { .. } => {
            let model = model.into_diff_ar().expect("kind checked");
            let need = model.order + 1;
            if history.len() < need {
                bail!(
                    "history holds {} values but the model needs the last {need}",
                    history.len()
                );
            }
            let window = &history[history.len() - need..];
            for step in 1..=horizon {
                let f = multi_step(&model, window, step)?;
                rows.push((step, f.mean, f.variance));
            }
        }
        RealtimeModel::Ar { .. } => {
            let model = model.into_ar().expect("kind checked");
            let (mle_path, features_text) = match (mle_model, features) {
                (Some(m), Some(f)) => (m, f),
                _ => bail!(
                    "kind = ar models take their drift from the long-term tier: \
                     pass --mle-model <fit.json> and --features x1,x2,x3,x4"
                ),
            };
            let fit_text = fs::read_to_string(mle_path)
                .with_context(|| format!("reading {}", mle_path.display()))?;
            let fit: gridcast_core::MleFit = serde_json::from_str(&fit_text)
                .with_context(|| format!("parsing {}", mle_path.display()))?;
            let (mu_hat, mu_var) = predict(&fit, parse_features(features_text)?);

            if history.len() < model.order {
                bail!(
                    "history holds {} values but the model needs the last {}",
                    history.len(),
                    model.order
                );
            }
            let window = &history[history.len() - model.order..];
            for step in 1..=horizon {
                let f = multi_step_ar(&model, window, mu_hat, mu_var, step)?;
                rows.push((step, f.mean, f.variance));
            }
        }
    }

    let path = cli.out_dir.join("forecast.csv");
    let mut out = String::from("step,mean_kw,variance_kw2\n");
    for (step, mean, variance) in rows {
        out.push_str(&format!("{step},{mean},{variance}\n"));
    }
    fs::write(&path, out)?;
    println!("wrote {horizon}-step forecast to {}", path.display());
    Ok(vec![path])
}

// ---------------------------------------------------------------------------
// adequacy
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub fn adequacy(
    cli: &Cli,
    lambdas: &[f64],
    sigma2s: &[f64],
    t_grid: Option<&[f64]>,
    t_max: Option<f64>,
    t_step: f64,
    paths: Option<usize>,
    steps: usize,
) -> Result<Vec<PathBuf>> {
    let grid: Vec<f64> = match (t_grid, t_max) {
        (Some(grid), _) => grid.to_vec(),
        (None, Some(t_max)) => {
            if t_step.is_nan() || t_max.is_nan() || t_step <= 0.0 || t_max < t_step {
                bail!("--t-max/--t-step must satisfy 0 < t-step <= t-max");
            }
            let n = (t_max / t_step).round() as usize;
            (1..=n).map(|i| i as f64 * t_step).collect()
        }
        (None, None) => bail!("pass either --t-grid or --t-max"),
    };

    let mut curves = curve_table(lambdas, sigma2s, &grid)?;
    if let Some(n_paths) = paths {
        curves = curves
            .into_iter()
            .enumerate()
            .map(|(i, curve)| {
                let seed = cli
                    .seed
                    .wrapping_add((i as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
                curve.with_monte_carlo(steps, n_paths, seed)
            })
            .collect::<gridcast_core::Result<_>>()?;
    }

    let path = cli.out_dir.join("adequacy.csv");
    let mut buf = Vec::new();
    AdequacyCurve::write_csv(&curves, &mut buf)?;
    fs::write(&path, buf)?;
    println!(
        "wrote {} curves over {} grid points to {}",
        curves.len(),
        grid.len(),
        path.display()
    );
    Ok(vec![path])
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn simulate(cli: &Cli, scenario_path: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(scenario_path)
        .with_context(|| format!("reading scenario {}", scenario_path.display()))?;
    let scenario: Scenario = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", scenario_path.display()))?;

    let (trace, summaries) = run_scenario(&scenario, cli.seed)?;

    let trace_path = cli.out_dir.join("trace.csv");
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    fs::write(&trace_path, buf)?;

    let summary_path = cli.out_dir.join("summary.json");
    write_json(&summary_path, &summaries)?;

    for s in &summaries {
        println!(
            "community {}: prefix adequacy {:.4}, adequate steps {:.4}, \
             unmet {:.3} kWh, bulk {:.3} kWh, final storage {:.3} kWh",
            s.community,
            s.prefix_adequacy,
            s.adequate_step_fraction,
            s.unmet_kwh_total,
            s.bulk_kwh_total,
            s.final_storage_kwh
        );
    }
    Ok(vec![trace_path, summary_path])
}
