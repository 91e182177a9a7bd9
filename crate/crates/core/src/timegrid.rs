//! Calendar/weather partitioning of the historical timeline.
//!
//! The horizon `[0, T·u]` is cut into nested cycles: year parts (365-day
//! blocks counted from the epoch), a weekend/business-day split (from the
//! proleptic Gregorian weekday of the absolute date), day parts
//! (second-of-day cut points), weather condition, and the running day index.
//! All intervals are half-open `[start, end)` so the partition is total and
//! disjoint. Training rows aggregate one partition cell into an average-power
//! sample for the long-term regression tier.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, Utc, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;
/// Year parts cycle over fixed 365-day blocks counted from the epoch;
/// leap-day drift is out of scope.
pub const DAYS_PER_YEAR: u64 = 365;

fn default_true() -> bool {
    true
}

/// Static description of the sampling grid and the calendar partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    /// Sampling period `u` in seconds.
    pub step_seconds: f64,
    /// Number of steps `T`; the horizon is `[0, T·u]`.
    pub horizon_steps: u64,
    /// Absolute instant of step 0 (ISO-8601); fixes the weekday calendar.
    pub epoch: DateTime<Utc>,
    /// Day-of-cycle cut points (1-based, first must be 1) opening each year part.
    pub year_part_boundaries: Vec<u32>,
    /// Second-of-day cut points (first must be 0) opening each day part.
    pub day_part_boundaries: Vec<u32>,
    /// Known weather condition labels.
    pub weather_labels: Vec<String>,
    /// Weekend/business-day split; disable to reuse the partition for
    /// generation, which has no weekly usage pattern.
    #[serde(default = "default_true")]
    pub week_split: bool,
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.step_seconds.is_finite() || self.step_seconds <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "step_seconds must be positive, got {}",
                self.step_seconds
            )));
        }
        if self.horizon_steps == 0 {
            return Err(Error::InvalidConfig("horizon_steps must be >= 1".into()));
        }
        check_boundaries(
            &self.year_part_boundaries,
            1,
            DAYS_PER_YEAR as u32,
            "year_part_boundaries",
        )?;
        check_boundaries(&self.day_part_boundaries, 0, 86_399, "day_part_boundaries")?;
        if self.weather_labels.is_empty() {
            return Err(Error::InvalidConfig(
                "weather_labels must be non-empty".into(),
            ));
        }
        let mut seen = HashSet::new();
        for label in &self.weather_labels {
            if !seen.insert(label) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate weather label '{label}'"
                )));
            }
        }
        Ok(())
    }

    /// Horizon length `T·u` in seconds.
    pub fn horizon_seconds(&self) -> f64 {
        self.horizon_steps as f64 * self.step_seconds
    }

    /// Number of day blocks touched by sample times in `[0, T·u]`.
    pub fn day_count(&self) -> u64 {
        (self.horizon_seconds() / SECONDS_PER_DAY).floor() as u64 + 1
    }

    /// Copy of the config with the weekend/business split disabled, as used
    /// when partitioning generation histories.
    pub fn without_week_split(&self) -> GridConfig {
        GridConfig {
            week_split: false,
            ..self.clone()
        }
    }

    fn known_weather(&self, label: &str) -> Result<()> {
        if self.weather_labels.iter().any(|w| w == label) {
            Ok(())
        } else {
            Err(Error::UnknownWeather {
                label: label.to_string(),
                known: self.weather_labels.join(", "),
            })
        }
    }
}

fn check_boundaries(bounds: &[u32], first: u32, max: u32, what: &str) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::InvalidConfig(format!("{what} must be non-empty")));
    }
    if bounds[0] != first {
        return Err(Error::InvalidConfig(format!(
            "{what} must start at {first} (cycle origin), got {}",
            bounds[0]
        )));
    }
    for pair in bounds.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidConfig(format!(
                "{what} must be strictly increasing: {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    if *bounds.last().unwrap() > max {
        return Err(Error::InvalidConfig(format!(
            "{what} must stay within [{first}, {max}], got {}",
            bounds.last().unwrap()
        )));
    }
    Ok(())
}

/// One timestamped sample for one community.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub tau: u64,
    pub community: u32,
    pub demand_kw: f64,
    pub generation_kw: f64,
    pub temperature_c: f64,
    pub weather: String,
}

/// Which measured quantity a training row averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Demand,
    Generation,
}

impl Quantity {
    pub fn of(self, obs: &Observation) -> f64 {
        match self {
            Quantity::Demand => obs.demand_kw,
            Quantity::Generation => obs.generation_kw,
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantity::Demand => write!(f, "demand"),
            Quantity::Generation => write!(f, "generation"),
        }
    }
}

/// Address of one atomic partition cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CalendarKey {
    /// Year part, 1-based.
    pub year_part: u32,
    /// 1 = weekend, 2 = business day (1 for everything when the split is off).
    pub week_part: u8,
    /// Day part, 1-based.
    pub day_part: u32,
    pub weather: String,
    pub community: u32,
    /// Day index within the horizon, 1-based.
    pub day_index: u64,
}

impl CalendarKey {
    /// Cell family `(i, j, k, w, q)`: the key with the day index erased.
    /// One regression is fitted per family, across its days.
    pub fn family(&self) -> CellFamily {
        CellFamily {
            year_part: self.year_part,
            week_part: self.week_part,
            day_part: self.day_part,
            weather: self.weather.clone(),
            community: self.community,
        }
    }
}

/// Partition cell family identifier; one long-term fit per family.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellFamily {
    pub year_part: u32,
    pub week_part: u8,
    pub day_part: u32,
    pub weather: String,
    pub community: u32,
}

impl fmt::Display for CellFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "y{}-j{}-k{}-{}-q{}",
            self.year_part, self.week_part, self.day_part, self.weather, self.community
        )
    }
}

/// One aggregated regression sample: features and the cell-average power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    /// Whole years elapsed since step 0.
    pub years_elapsed: u32,
    /// Whole weeks into the current year part.
    pub weeks_into_year_part: u32,
    /// Whole days into the current week part.
    pub days_into_week_part: u32,
    /// Mean temperature over the cell, °C.
    pub temperature_c: f64,
    /// Mean power over the cell, kW.
    pub mean_kw: f64,
}

impl TrainingRow {
    /// Feature vector `[x1, x2, x3, x4]` as fed to the regression tier.
    pub fn features(&self) -> [f64; 4] {
        [
            f64::from(self.years_elapsed),
            f64::from(self.weeks_into_year_part),
            f64::from(self.days_into_week_part),
            self.temperature_c,
        ]
    }
}

/// Maps a timestamp (seconds since the epoch sample), weather condition and
/// community to its unique partition cell.
pub fn partition_key(
    timestamp: f64,
    weather: &str,
    community: u32,
    config: &GridConfig,
) -> Result<CalendarKey> {
    let horizon = config.horizon_seconds();
    if !timestamp.is_finite() || timestamp < 0.0 || timestamp > horizon {
        return Err(Error::TimestampOutOfHorizon { timestamp, horizon });
    }
    config.known_weather(weather)?;

    let day0 = (timestamp / SECONDS_PER_DAY).floor() as u64;
    let ordinal = (day0 % DAYS_PER_YEAR) as u32 + 1;
    let year_part = cycle_index(&config.year_part_boundaries, ordinal);

    let second_of_day = (timestamp % SECONDS_PER_DAY) as u32;
    let day_part = cycle_index(&config.day_part_boundaries, second_of_day);

    let week_part = if config.week_split {
        match weekday_at(config, timestamp) {
            Weekday::Sat | Weekday::Sun => 1,
            _ => 2,
        }
    } else {
        1
    };

    Ok(CalendarKey {
        year_part,
        week_part,
        day_part,
        weather: weather.to_string(),
        community,
        day_index: day0 + 1,
    })
}

/// Key of the cell an observation falls in.
pub fn observation_key(obs: &Observation, config: &GridConfig) -> Result<CalendarKey> {
    partition_key(
        obs.tau as f64 * config.step_seconds,
        &obs.weather,
        obs.community,
        config,
    )
}

// Largest boundary <= position; boundaries are validated to start at the
// cycle origin, so the scan never comes up empty.
fn cycle_index(bounds: &[u32], position: u32) -> u32 {
    let mut idx = 1;
    for (n, b) in bounds.iter().enumerate() {
        if *b <= position {
            idx = n as u32 + 1;
        } else {
            break;
        }
    }
    idx
}

fn weekday_at(config: &GridConfig, timestamp: f64) -> Weekday {
    let instant = config.epoch + Duration::milliseconds((timestamp * 1e3).round() as i64);
    instant.weekday()
}

/// All observations of `dataset` whose partition cell equals `key`, in input
/// order. An empty result is not an error.
pub fn segment_observations(
    dataset: &[Observation],
    key: &CalendarKey,
    config: &GridConfig,
) -> Result<Vec<Observation>> {
    let mut segment = Vec::new();
    for obs in dataset {
        if observation_key(obs, config)? == *key {
            segment.push(obs.clone());
        }
    }
    Ok(segment)
}

/// Groups a dataset into its non-empty partition cells.
pub fn group_by_key(
    dataset: &[Observation],
    config: &GridConfig,
) -> Result<BTreeMap<CalendarKey, Vec<Observation>>> {
    let mut map: BTreeMap<CalendarKey, Vec<Observation>> = BTreeMap::new();
    for obs in dataset {
        map.entry(observation_key(obs, config)?)
            .or_default()
            .push(obs.clone());
    }
    Ok(map)
}

/// Collapses one non-empty cell into a training row: `y` is the mean of the
/// chosen quantity, `x4` the mean temperature, `x1..x3` the cell's calendar
/// position.
pub fn aggregate_segment(
    segment: &[Observation],
    quantity: Quantity,
    config: &GridConfig,
) -> Result<TrainingRow> {
    let first = segment.first().ok_or(Error::EmptySegment)?;
    debug_assert!(
        segment
            .iter()
            .all(|o| observation_key(o, config).ok() == observation_key(first, config).ok()),
        "segment spans more than one partition cell"
    );

    let n = segment.len() as f64;
    let mean_kw = segment.iter().map(|o| quantity.of(o)).sum::<f64>() / n;
    let temperature_c = segment.iter().map(|o| o.temperature_c).sum::<f64>() / n;

    let timestamp = first.tau as f64 * config.step_seconds;
    let day0 = (timestamp / SECONDS_PER_DAY).floor() as u64;
    let years_elapsed = (day0 / DAYS_PER_YEAR) as u32;

    let ordinal = (day0 % DAYS_PER_YEAR) as u32 + 1;
    let part_idx = cycle_index(&config.year_part_boundaries, ordinal) as usize - 1;
    let part_start = config.year_part_boundaries[part_idx];
    let weeks_into_year_part = (ordinal - part_start) / 7;

    let weekday = weekday_at(config, timestamp);
    let days_into_week_part = if config.week_split {
        match weekday {
            Weekday::Sat => 0,
            Weekday::Sun => 1,
            other => other.num_days_from_monday(),
        }
    } else {
        weekday.num_days_from_monday()
    };

    Ok(TrainingRow {
        years_elapsed,
        weeks_into_year_part,
        days_into_week_part,
        temperature_c,
        mean_kw,
    })
}

/// Loads, validates and τ-sorts an observation CSV
/// (`tau,community,demand_kw,generation_kw,temperature_c,weather`).
///
/// Duplicate `(community, tau)` pairs, unknown weather labels and malformed
/// rows are reported with their line number.
pub fn load_csv(path: &Path, config: &GridConfig) -> Result<Vec<Observation>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let expected = [
        "tau",
        "community",
        "demand_kw",
        "generation_kw",
        "temperature_c",
        "weather",
    ];
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidConfig(format!("input CSV is missing column '{name}'")))
    };
    let idx: Vec<usize> = expected.iter().map(|n| col(n)).collect::<Result<_>>()?;

    let mut seen: HashSet<(u32, u64)> = HashSet::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(rows.len() + 2);
        let field = |i: usize| record.get(idx[i]).unwrap_or("");
        let parse_f64 = |i: usize, name: &str| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("{name} '{}' is not a number", field(i)),
            })
        };
        let tau: u64 = field(0).parse().map_err(|_| Error::MalformedRow {
            line,
            reason: format!("tau '{}' is not a non-negative integer", field(0)),
        })?;
        let community: u32 = field(1).parse().map_err(|_| Error::MalformedRow {
            line,
            reason: format!("community '{}' is not a non-negative integer", field(1)),
        })?;
        let demand_kw = parse_f64(2, "demand_kw")?;
        let generation_kw = parse_f64(3, "generation_kw")?;
        let temperature_c = parse_f64(4, "temperature_c")?;
        let weather = field(5).to_string();

        if tau > config.horizon_steps {
            return Err(Error::MalformedRow {
                line,
                reason: format!("tau {tau} exceeds horizon_steps {}", config.horizon_steps),
            });
        }
        for (value, name) in [(demand_kw, "demand_kw"), (generation_kw, "generation_kw")] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("{name} must be finite and non-negative, got {value}"),
                });
            }
        }
        if !temperature_c.is_finite() {
            return Err(Error::MalformedRow {
                line,
                reason: "temperature_c must be finite".into(),
            });
        }
        config.known_weather(&weather).map_err(|e| match e {
            Error::UnknownWeather { label, known } => Error::MalformedRow {
                line,
                reason: format!("unknown weather label '{label}' (configured: {known})"),
            },
            other => other,
        })?;
        if !seen.insert((community, tau)) {
            return Err(Error::DuplicateObservation {
                line,
                community,
                tau,
            });
        }
        rows.push(Observation {
            tau,
            community,
            demand_kw,
            generation_kw,
            temperature_c,
            weather,
        });
    }
    rows.sort_by_key(|o| (o.tau, o.community));
    Ok(rows)
}
