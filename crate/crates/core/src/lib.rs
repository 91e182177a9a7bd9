//! Two-tier demand/generation forecasting for community grids with
//! storage-adequacy analysis.
//!
//! The long-term tier partitions history by calendar position and weather
//! ([`timegrid`]) and fits a maximum-likelihood linear model per partition
//! cell ([`mle`]). The real-time tier forecasts the next steps with
//! autoregressive models on levels or first differences ([`arima`]). The
//! [`adequacy`] module bounds the probability that stored energy stays above
//! a threshold under forecast noise, and [`simulator`] runs communities
//! operating the local load-management controller against a bulk-generation
//! backstop.

pub mod adequacy;
pub mod arima;
pub mod erf;
pub mod error;
mod linalg;
pub mod mle;
pub mod simulator;
pub mod timegrid;

pub use adequacy::{
    adequacy_lower_bound, curve_table, simulate_storage_paths, AdequacyCurve, ExpectedStorage,
    NoiseParams, StorageSpec,
};
pub use arima::{
    fit_ar, fit_diff_ar, forecast_ar_with_drift, forecast_diff_ar, multi_step, multi_step_ar,
    ArModel, DiffArModel, Forecast, RealtimeModel,
};
pub use erf::{erf, erfc};
pub use error::{Error, Result};
pub use mle::{build_design, fit_mle, forecast_horizon, predict, residuals, DesignMatrix, MleFit};
pub use simulator::{
    empirical_adequacy, run_scenario, run_simulation, step_llmu, synth_process, BulkPolicy,
    Community, CommunityScenario, CommunitySummary, ProcessSpec, Profile, Scenario, SimConfig,
    SimTrace, StepActions, TraceRow,
};
pub use timegrid::{
    aggregate_segment, group_by_key, load_csv, observation_key, partition_key,
    segment_observations, CalendarKey, CellFamily, GridConfig, Observation, Quantity, TrainingRow,
};
