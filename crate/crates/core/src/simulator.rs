//! Discrete-time simulation of communities running the local load
//! management controller.
//!
//! Each step routes the realized demand/generation flows (storage discharge
//! when short, storage charge when long), forecasts the next-step stored
//! energy from the community's real-time models, and asks the bulk backstop
//! to restore the level to `s_q` whenever the forecast dips to `s_q − λ`.
//! Requested bulk energy arrives one step later, loss-free.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::arima::{fit_diff_ar, forecast_diff_ar, DiffArModel};
use crate::error::{Error, Result};

/// How the bulk generators answer energy requests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BulkPolicy {
    /// Deliver every request in full.
    Unbounded,
    /// Deliver at most `p_max_kw` averaged over the step.
    Capped { p_max_kw: f64 },
    /// Never deliver (no backstop).
    Disabled,
}

/// Simulation-wide knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Step length `u` in seconds.
    pub step_seconds: f64,
    pub horizon_steps: usize,
    pub bulk_policy: BulkPolicy,
    pub seed: u64,
}

impl SimConfig {
    pub fn step_hours(&self) -> f64 {
        self.step_seconds / 3600.0
    }

    fn validate(&self) -> Result<()> {
        if !self.step_seconds.is_finite() || self.step_seconds <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "step_seconds must be positive, got {}",
                self.step_seconds
            )));
        }
        if self.horizon_steps == 0 {
            return Err(Error::InvalidParameter("horizon_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// One community's state: storage, threshold and real-time forecasters with
/// their history buffers.
#[derive(Debug, Clone)]
pub struct Community {
    pub id: u32,
    /// Initial stored energy s_q, kWh.
    pub initial_kwh: f64,
    /// Threshold margin λ, kWh.
    pub margin_kwh: f64,
    /// Current stored energy, kWh; never negative.
    pub storage_kwh: f64,
    pub demand_model: DiffArModel,
    pub generation_model: DiffArModel,
    demand_history: Vec<f64>,
    generation_history: Vec<f64>,
}

impl Community {
    pub fn new(
        id: u32,
        initial_kwh: f64,
        margin_kwh: f64,
        demand_model: DiffArModel,
        generation_model: DiffArModel,
    ) -> Community {
        Community {
            id,
            initial_kwh,
            margin_kwh,
            storage_kwh: initial_kwh,
            demand_model,
            generation_model,
            demand_history: Vec::new(),
            generation_history: Vec::new(),
        }
    }

    /// Number of leading series samples consumed to prime the forecasters.
    pub fn warmup_len(&self) -> usize {
        self.demand_model.order.max(self.generation_model.order) + 1
    }

    fn forecast_one_step(&self) -> Result<(f64, f64)> {
        let dw = self.demand_model.order + 1;
        let gw = self.generation_model.order + 1;
        let dn = self.demand_history.len();
        let gn = self.generation_history.len();
        let d = forecast_diff_ar(&self.demand_model, &self.demand_history[dn - dw..])?.mean;
        let g = forecast_diff_ar(&self.generation_model, &self.generation_history[gn - gw..])?.mean;
        Ok((d, g))
    }

    fn push_observation(&mut self, demand_kw: f64, generation_kw: f64) {
        self.demand_history.push(demand_kw);
        self.generation_history.push(generation_kw);
        // Only the forecaster windows are ever read; cap the buffers.
        let keep = self.warmup_len() + 1;
        if self.demand_history.len() > 4 * keep {
            let cut = self.demand_history.len() - keep;
            self.demand_history.drain(..cut);
            self.generation_history.drain(..cut);
        }
    }
}

/// Flow decisions for one step of one community.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepActions {
    /// Energy the bulk generators will deliver next step (post-policy), kWh.
    pub bulk_request_kwh: f64,
    /// Energy actually delivered to customers this step, kWh.
    pub delivered_kwh: f64,
    /// Signed storage flow from the local side: + charge, − discharge, kWh
    /// (bulk deliveries are accounted separately).
    pub storage_flow_kwh: f64,
    /// Demand energy that could not be served, kWh.
    pub unmet_kwh: f64,
}

/// One controller decision: bulk request from the next-step storage
/// forecast, then the demand/generation flow split against current storage.
///
/// Degenerate inputs resolve to events (unmet demand), never failures.
pub fn step_llmu(
    community: &Community,
    demand_now_kw: f64,
    gen_now_kw: f64,
    shat_next_kwh: f64,
    step_hours: f64,
    policy: BulkPolicy,
) -> StepActions {
    let demand_e = demand_now_kw.max(0.0) * step_hours;
    let gen_e = gen_now_kw.max(0.0) * step_hours;

    // Fires on equality: a forecast exactly at the threshold already counts.
    let bulk_request_kwh = if shat_next_kwh <= community.initial_kwh - community.margin_kwh {
        let request = community.initial_kwh - shat_next_kwh;
        match policy {
            BulkPolicy::Unbounded => request,
            BulkPolicy::Capped { p_max_kw } => request.min(p_max_kw.max(0.0) * step_hours),
            BulkPolicy::Disabled => 0.0,
        }
    } else {
        0.0
    };

    if demand_e > gen_e {
        let needed = demand_e - gen_e;
        let discharge = needed.min(community.storage_kwh);
        let unmet_kwh = needed - discharge;
        StepActions {
            bulk_request_kwh,
            delivered_kwh: demand_e - unmet_kwh,
            storage_flow_kwh: -discharge,
            unmet_kwh,
        }
    } else {
        StepActions {
            bulk_request_kwh,
            delivered_kwh: demand_e,
            storage_flow_kwh: gen_e - demand_e,
            unmet_kwh: 0.0,
        }
    }
}

/// Per-step record for one community.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub community: u32,
    /// Step index within the simulated horizon, 0-based.
    pub tau: u64,
    pub demand_kw: f64,
    pub generation_kw: f64,
    /// Stored energy after this step's flows, kWh.
    pub storage_kwh: f64,
    pub delivered_kwh: f64,
    /// Signed local storage flow (+ charge, − discharge), kWh.
    pub storage_flow_kwh: f64,
    /// Bulk energy delivered this step, kWh.
    pub bulk_kwh: f64,
    pub unmet_kwh: f64,
    /// Next-step stored-energy forecast made during this step, kWh.
    pub shat_next_kwh: f64,
    /// Storage stayed strictly above `s_q − λ` at the end of this step.
    pub adequate: bool,
}

/// Full simulation record, ordered by `(tau, community)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
}

impl SimTrace {
    pub fn rows_for(&self, community: u32) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.community == community)
    }

    /// Residual of `generation + bulk + unmet − demand − Δstorage` per row,
    /// using the local flow ledger for Δstorage. Exact bookkeeping keeps
    /// every entry at rounding level.
    pub fn energy_balance_residuals(&self, step_hours: f64) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| {
                let demand_e = r.demand_kw.max(0.0) * step_hours;
                let gen_e = r.generation_kw.max(0.0) * step_hours;
                let delta_storage = r.storage_flow_kwh + r.bulk_kwh;
                gen_e + r.bulk_kwh + r.unmet_kwh - demand_e - delta_storage
            })
            .collect()
    }

    /// Writes `q,tau,demand_kw,gen_kw,storage_kwh,bulk_kwh,unmet_kwh,shat_next_kwh,adequate`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "q,tau,demand_kw,gen_kw,storage_kwh,bulk_kwh,unmet_kwh,shat_next_kwh,adequate"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.community,
                r.tau,
                r.demand_kw,
                r.generation_kw,
                r.storage_kwh,
                r.bulk_kwh,
                r.unmet_kwh,
                r.shat_next_kwh,
                r.adequate
            )?;
        }
        Ok(())
    }
}

/// Runs the controller over exogenous demand/generation series.
///
/// `demand_series[i]`/`generation_series[i]` belong to `communities[i]` and
/// must cover that community's warmup plus the horizon; the leading warmup
/// samples prime the forecaster histories.
pub fn run_simulation(
    config: &SimConfig,
    communities: &mut [Community],
    demand_series: &[Vec<f64>],
    generation_series: &[Vec<f64>],
) -> Result<SimTrace> {
    config.validate()?;
    if communities.len() != demand_series.len() || communities.len() != generation_series.len() {
        return Err(Error::LengthMismatch {
            left: communities.len(),
            right: demand_series.len().min(generation_series.len()),
        });
    }
    let h = config.step_hours();

    let mut warmups = Vec::with_capacity(communities.len());
    for (c, community) in communities.iter_mut().enumerate() {
        let warmup = community.warmup_len();
        let need = warmup + config.horizon_steps;
        for series in [&demand_series[c], &generation_series[c]] {
            if series.len() < need {
                return Err(Error::SeriesShorterThanHorizon {
                    got: series.len(),
                    need,
                });
            }
        }
        community.demand_history.clear();
        community.generation_history.clear();
        for i in 0..warmup {
            community.push_observation(demand_series[c][i], generation_series[c][i]);
        }
        warmups.push(warmup);
    }

    let mut pending_bulk = vec![0.0f64; communities.len()];
    let mut trace = SimTrace::default();

    for tau in 0..config.horizon_steps {
        for (c, community) in communities.iter_mut().enumerate() {
            let idx = warmups[c] + tau;
            let demand_now = demand_series[c][idx];
            let gen_now = generation_series[c][idx];

            // Bulk requested during the previous step lands now.
            let bulk_in = std::mem::take(&mut pending_bulk[c]);
            community.storage_kwh += bulk_in;

            // Next-step storage forecast from the real-time tier.
            let (d_hat, g_hat) = community.forecast_one_step()?;
            let shat_next = community.storage_kwh + h * (g_hat - d_hat);

            let actions = step_llmu(
                community,
                demand_now,
                gen_now,
                shat_next,
                h,
                config.bulk_policy,
            );
            pending_bulk[c] = actions.bulk_request_kwh;
            community.storage_kwh += actions.storage_flow_kwh;
            debug_assert!(community.storage_kwh >= 0.0);

            community.push_observation(demand_now, gen_now);

            trace.rows.push(TraceRow {
                community: community.id,
                tau: tau as u64,
                demand_kw: demand_now,
                generation_kw: gen_now,
                storage_kwh: community.storage_kwh,
                delivered_kwh: actions.delivered_kwh,
                storage_flow_kwh: actions.storage_flow_kwh,
                bulk_kwh: bulk_in,
                unmet_kwh: actions.unmet_kwh,
                shat_next_kwh: shat_next,
                adequate: community.storage_kwh > community.initial_kwh - community.margin_kwh,
            });
        }
    }
    Ok(trace)
}

/// Prefix adequacy of one community's trace: the fraction of steps whose
/// entire prefix stayed adequate. A single breach disqualifies every later
/// step.
pub fn empirical_adequacy(trace: &SimTrace, community: u32) -> f64 {
    let mut total = 0usize;
    let mut intact = 0usize;
    let mut prefix_ok = true;
    for row in trace.rows_for(community) {
        total += 1;
        prefix_ok &= row.adequate;
        if prefix_ok {
            intact += 1;
        }
    }
    if total == 0 {
        return 0.0;
    }
    intact as f64 / total as f64
}

/// Shape of a synthetic power process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Flat,
    /// Cosine bump peaking at `peak_step` within each `period_steps` cycle,
    /// emulating a daily demand shape with an evening maximum.
    DailySinusoid {
        period_steps: usize,
        peak_step: usize,
    },
}

impl Profile {
    fn value(&self, step: usize, base_kw: f64, amplitude_kw: f64) -> f64 {
        match *self {
            Profile::Flat => base_kw,
            Profile::DailySinusoid {
                period_steps,
                peak_step,
            } => {
                let phase = 2.0 * std::f64::consts::PI * (step as f64 - peak_step as f64)
                    / period_steps.max(1) as f64;
                base_kw + amplitude_kw * phase.cos()
            }
        }
    }
}

/// Generates a non-negative kW series: the profile plus AR(1)-colored noise,
/// clamped at zero.
pub fn synth_process(
    profile: &Profile,
    base_kw: f64,
    amplitude_kw: f64,
    ar_phi: f64,
    noise_sigma: f64,
    steps: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sigma.max(0.0)).expect("non-negative sigma");
    let mut colored = 0.0f64;
    (0..steps)
        .map(|t| {
            colored = ar_phi * colored + normal.sample(&mut rng);
            (profile.value(t, base_kw, amplitude_kw) + colored).max(0.0)
        })
        .collect()
}

fn default_train_steps() -> usize {
    2000
}

fn default_ar_order() -> usize {
    4
}

/// Synthetic process parameters for one quantity of one community.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub profile: Profile,
    pub base_kw: f64,
    #[serde(default)]
    pub amplitude_kw: f64,
    #[serde(default)]
    pub ar_phi: f64,
    #[serde(default)]
    pub noise_sigma: f64,
}

impl ProcessSpec {
    pub fn generate(&self, steps: usize, seed: u64) -> Vec<f64> {
        synth_process(
            &self.profile,
            self.base_kw,
            self.amplitude_kw,
            self.ar_phi,
            self.noise_sigma,
            steps,
            seed,
        )
    }
}

/// One community's scenario entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityScenario {
    pub id: u32,
    pub initial_kwh: f64,
    pub margin_kwh: f64,
    pub demand: ProcessSpec,
    pub generation: ProcessSpec,
}

/// A full simulation scenario as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub step_seconds: f64,
    pub horizon_steps: usize,
    /// Leading samples used to fit each community's real-time models.
    #[serde(default = "default_train_steps")]
    pub train_steps: usize,
    #[serde(default = "default_ar_order")]
    pub ar_order: usize,
    pub bulk_policy: BulkPolicy,
    /// Overrides the caller-supplied seed when present.
    #[serde(default)]
    pub seed: Option<u64>,
    pub communities: Vec<CommunityScenario>,
}

/// Adequacy and flow totals for one community of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySummary {
    pub community: u32,
    pub unmet_kwh_total: f64,
    pub bulk_kwh_total: f64,
    pub prefix_adequacy: f64,
    pub adequate_step_fraction: f64,
    pub final_storage_kwh: f64,
}

/// Generates the scenario's processes, fits the real-time models on the
/// training prefix, runs the controller and summarizes per community.
pub fn run_scenario(
    scenario: &Scenario,
    default_seed: u64,
) -> Result<(SimTrace, Vec<CommunitySummary>)> {
    if scenario.communities.is_empty() {
        return Err(Error::InvalidParameter(
            "scenario has no communities".into(),
        ));
    }
    if scenario.train_steps < 10 * scenario.ar_order + 2 {
        return Err(Error::InvalidParameter(format!(
            "train_steps {} too small for AR order {}",
            scenario.train_steps, scenario.ar_order
        )));
    }
    let seed = scenario.seed.unwrap_or(default_seed);
    let config = SimConfig {
        step_seconds: scenario.step_seconds,
        horizon_steps: scenario.horizon_steps,
        bulk_policy: scenario.bulk_policy,
        seed,
    };

    let warmup = scenario.ar_order + 1;
    let total = scenario.train_steps + warmup + scenario.horizon_steps;

    let mut communities = Vec::with_capacity(scenario.communities.len());
    let mut demand_series = Vec::with_capacity(scenario.communities.len());
    let mut generation_series = Vec::with_capacity(scenario.communities.len());
    for (i, spec) in scenario.communities.iter().enumerate() {
        let base = seed
            .wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add(u64::from(spec.id));
        let demand = spec.demand.generate(total, base);
        let generation = spec
            .generation
            .generate(total, base ^ 0x5DEE_CE66_D153_21C5);

        let demand_model = fit_or_random_walk(&demand[..scenario.train_steps], scenario.ar_order);
        let generation_model =
            fit_or_random_walk(&generation[..scenario.train_steps], scenario.ar_order);

        communities.push(Community::new(
            spec.id,
            spec.initial_kwh,
            spec.margin_kwh,
            demand_model,
            generation_model,
        ));
        demand_series.push(demand[scenario.train_steps..].to_vec());
        generation_series.push(generation[scenario.train_steps..].to_vec());
    }

    let trace = run_simulation(
        &config,
        &mut communities,
        &demand_series,
        &generation_series,
    )?;

    let summaries = communities
        .iter()
        .map(|c| summarize_community(&trace, c))
        .collect();
    Ok((trace, summaries))
}

// Degenerate training series (for example noise-free constants) carry no
// increment signal; fall back to a random-walk forecaster.
fn fit_or_random_walk(series: &[f64], order: usize) -> DiffArModel {
    match fit_diff_ar(series, order) {
        Ok(model) => model,
        Err(_) => DiffArModel {
            order,
            phi: vec![0.0; order],
            noise_var: 0.0,
        },
    }
}

fn summarize_community(trace: &SimTrace, community: &Community) -> CommunitySummary {
    let mut unmet = 0.0;
    let mut bulk = 0.0;
    let mut adequate = 0usize;
    let mut total = 0usize;
    let mut last_storage = community.initial_kwh;
    for row in trace.rows_for(community.id) {
        unmet += row.unmet_kwh;
        bulk += row.bulk_kwh;
        adequate += usize::from(row.adequate);
        total += 1;
        last_storage = row.storage_kwh;
    }
    CommunitySummary {
        community: community.id,
        unmet_kwh_total: unmet,
        bulk_kwh_total: bulk,
        prefix_adequacy: empirical_adequacy(trace, community.id),
        adequate_step_fraction: if total == 0 {
            0.0
        } else {
            adequate as f64 / total as f64
        },
        final_storage_kwh: last_storage,
    }
}

/// Per-community totals grouped for quick inspection.
pub fn summarize(trace: &SimTrace, communities: &[Community]) -> BTreeMap<u32, CommunitySummary> {
    communities
        .iter()
        .map(|c| (c.id, summarize_community(trace, c)))
        .collect()
}
