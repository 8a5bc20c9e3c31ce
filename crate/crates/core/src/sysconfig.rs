//! Physical and experimental parameters, unit conversion and scenario files.
//!
//! Everything inside the crate is SI: watts, meters, linear power ratios.
//! Decibel quantities only exist in scenario files and in reports.
//!
//! A scenario is a TOML file with four tables. Keys carry their unit:
//!
//! ```toml
//! [system]
//! num_clients = 5
//! antenna_gain_dbi = 0.0
//! ref_path_loss_db = -46.0
//! path_loss_exponent = 2.0
//! noise_power_dbm = -60.0
//! max_tx_power_dbm = 10.0
//! carrier_freq_hz = 5.0e9
//! distance_m = 100.0          # scalar (replicated) or one entry per client
//! noise = "on"                # "off" only for exact-identity verification
//! fading = "per_round"        # or "per_slot"
//!
//! [privacy]
//! epsilon = 0.01
//! delta = 0.1
//! clip_threshold = 5.0e-5
//! clip_norm = "l2"            # or "linf"
//!
//! [training]                  # optional, see `TrainingConfig`
//! [experiment]                # optional, see `ExperimentConfig`
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aircomp::SymbolMode;
use crate::channel::FadingMode;
use crate::error::{Error, Result};
use crate::fl::TrainingConfig;
use crate::privacy::{ClipNorm, PowerPolicy};

pub fn dbm_to_watts(x_dbm: f64) -> f64 {
    10f64.powf(x_dbm / 10.0) / 1000.0
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1000.0).log10()
}

pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

pub fn linear_to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Physical-layer constants of one deployment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemParams {
    /// Antenna gain product `G` (linear).
    pub antenna_gain: f64,
    /// Path loss at unit distance `β` (linear).
    pub ref_path_loss: f64,
    pub path_loss_exponent: f64,
    /// Receiver noise power `σ_n²` in watts.
    pub noise_power: f64,
    /// Per-client transmit power limit `P0` in watts.
    pub max_tx_power: f64,
    /// Informational only; the symbol-level model does not use it.
    pub carrier_freq: f64,
    /// Client-to-BS distances in meters; its length is the number of clients.
    pub distances: Vec<f64>,
    /// Receiver noise on/off. Off is only meaningful for verification.
    pub noise_enabled: bool,
    pub fading: FadingMode,
}

impl SystemParams {
    /// Settings of the reference deployment: equal 100 m distances,
    /// 0 dBi antennas, -46 dB reference path loss, exponent 2,
    /// -60 dBm noise, 10 dBm transmit limit, 5 GHz carrier.
    pub fn reference(num_clients: usize) -> Self {
        SystemParams {
            antenna_gain: db_to_linear(0.0),
            ref_path_loss: db_to_linear(-46.0),
            path_loss_exponent: 2.0,
            noise_power: dbm_to_watts(-60.0),
            max_tx_power: dbm_to_watts(10.0),
            carrier_freq: 5.0e9,
            distances: vec![100.0; num_clients],
            noise_enabled: true,
            fading: FadingMode::PerRound,
        }
    }

    pub fn num_clients(&self) -> usize {
        self.distances.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.distances.is_empty() {
            return Err(Error::invalid("num_clients", "must be at least 1"));
        }
        let positive = [
            ("antenna_gain", self.antenna_gain),
            ("ref_path_loss", self.ref_path_loss),
            ("noise_power", self.noise_power),
            ("max_tx_power", self.max_tx_power),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(field, format!("must be finite and > 0, got {value}")));
            }
        }
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent >= 0.0) {
            return Err(Error::invalid(
                "path_loss_exponent",
                format!("must be finite and >= 0, got {}", self.path_loss_exponent),
            ));
        }
        if let Some((i, r)) = self
            .distances
            .iter()
            .enumerate()
            .find(|(_, r)| !(r.is_finite() && **r > 0.0))
        {
            return Err(Error::invalid(
                format!("distance_m[{i}]"),
                format!("must be finite and > 0, got {r}"),
            ));
        }
        Ok(())
    }

    /// Large-scale gain `r_i^(-α)` of client `i`.
    pub fn path_gain(&self, i: usize) -> f64 {
        self.distances[i].powf(-self.path_loss_exponent)
    }

    /// `Σ_i r_i^α`, the rate of the minimum effective gain.
    pub fn sum_r_alpha(&self) -> f64 {
        self.distances.iter().map(|r| r.powf(self.path_loss_exponent)).sum()
    }

    /// `G·β`.
    pub fn link_gain(&self) -> f64 {
        self.antenna_gain * self.ref_path_loss
    }

    /// Same deployment resized to `num_clients`; distances are cycled.
    pub fn with_num_clients(&self, num_clients: usize) -> Self {
        let distances = (0..num_clients)
            .map(|i| self.distances[i % self.distances.len()])
            .collect();
        SystemParams {
            distances,
            ..self.clone()
        }
    }

    pub fn with_max_tx_power(&self, watts: f64) -> Self {
        SystemParams {
            max_tx_power: watts,
            ..self.clone()
        }
    }
}

/// Target `(ε, δ)` and clipping threshold `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyTarget {
    epsilon: f64,
    delta: f64,
    clip_threshold: f64,
    clip_norm: ClipNorm,
}

impl PrivacyTarget {
    /// `clip_threshold` may be `+inf`, which disables clipping.
    pub fn new(epsilon: f64, delta: f64, clip_threshold: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(
                "epsilon",
                format!("must be finite and > 0, got {epsilon}"),
            ));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        if clip_threshold.is_nan() || clip_threshold <= 0.0 {
            return Err(Error::invalid(
                "clip_threshold",
                format!("must be > 0, got {clip_threshold}"),
            ));
        }
        Ok(PrivacyTarget {
            epsilon,
            delta,
            clip_threshold,
            clip_norm: ClipNorm::L2,
        })
    }

    pub fn with_clip_norm(self, clip_norm: ClipNorm) -> Self {
        PrivacyTarget { clip_norm, ..self }
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self> {
        PrivacyTarget::new(epsilon, self.delta, self.clip_threshold).map(|t| t.with_clip_norm(self.clip_norm))
    }

    pub fn with_clip_threshold(self, clip_threshold: f64) -> Result<Self> {
        PrivacyTarget::new(self.epsilon, self.delta, clip_threshold).map(|t| t.with_clip_norm(self.clip_norm))
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn clip_threshold(&self) -> f64 {
        self.clip_threshold
    }

    pub fn clip_norm(&self) -> ClipNorm {
        self.clip_norm
    }

    /// `ln(1.25/δ)`, positive for every valid δ.
    pub fn log_term(&self) -> f64 {
        (1.25 / self.delta).ln()
    }
}

/// Command-level settings: grids, trial counts, seeds and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub epsilon_grid: Vec<f64>,
    pub num_clients_grid: Vec<usize>,
    pub max_tx_power_dbm_grid: Vec<f64>,
    pub num_trials: u64,
    pub master_seed: u64,
    pub output_path: Option<PathBuf>,
    pub policies: Vec<PowerPolicy>,
    pub symbol_mode: SymbolMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            epsilon_grid: vec![0.01, 0.1, 0.5, 0.95],
            num_clients_grid: vec![5, 100],
            max_tx_power_dbm_grid: vec![10.0],
            num_trials: 100_000,
            master_seed: 2021,
            output_path: None,
            policies: vec![PowerPolicy::DpStarStar, PowerPolicy::Conventional],
            symbol_mode: SymbolMode::Saturated,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon_grid.is_empty() {
            return Err(Error::invalid("experiment.epsilon_grid", "must not be empty"));
        }
        if let Some(e) = self.epsilon_grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::invalid(
                "experiment.epsilon_grid",
                format!("entries must be > 0, got {e}"),
            ));
        }
        if self.num_clients_grid.is_empty() {
            return Err(Error::invalid("experiment.num_clients_grid", "must not be empty"));
        }
        if self.num_clients_grid.contains(&0) {
            return Err(Error::invalid("experiment.num_clients_grid", "entries must be >= 1"));
        }
        if self.max_tx_power_dbm_grid.is_empty() {
            return Err(Error::invalid("experiment.max_tx_power_dbm_grid", "must not be empty"));
        }
        if let Some(p) = self.max_tx_power_dbm_grid.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(
                "experiment.max_tx_power_dbm_grid",
                format!("entries must be finite, got {p}"),
            ));
        }
        if self.num_trials == 0 {
            return Err(Error::invalid("experiment.num_trials", "must be >= 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::invalid("experiment.policies", "must not be empty"));
        }
        Ok(())
    }
}

/// A fully validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: SystemParams,
    pub privacy: PrivacyTarget,
    pub training: TrainingConfig,
    pub experiment: ExperimentConfig,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut scenario = parse_scenario(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_owned(),
            message,
        },
        other => other,
    })?;
    // relative dataset paths are resolved against the scenario file
    if let Some(dir) = path.parent() {
        scenario.training.dataset.resolve_paths(dir);
    }
    Ok(scenario)
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse {
        path: PathBuf::from("<memory>"),
        message: e.to_string(),
    })?;
    let system = raw.system.into_params()?;
    let privacy = raw.privacy.into_target()?;
    raw.training.validate()?;
    raw.experiment.validate()?;
    Ok(Scenario {
        system,
        privacy,
        training: raw.training,
        experiment: raw.experiment,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    system: RawSystem,
    privacy: RawPrivacy,
    #[serde(default)]
    training: TrainingConfig,
    #[serde(default)]
    experiment: ExperimentConfig,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Distances {
    Scalar(f64),
    PerClient(Vec<f64>),
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Switch {
    On,
    Off,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    num_clients: i64,
    antenna_gain_dbi: f64,
    ref_path_loss_db: f64,
    path_loss_exponent: f64,
    noise_power_dbm: f64,
    max_tx_power_dbm: f64,
    #[serde(default = "default_carrier")]
    carrier_freq_hz: f64,
    distance_m: Distances,
    #[serde(default = "default_noise")]
    noise: Switch,
    #[serde(default)]
    fading: FadingMode,
}

fn default_carrier() -> f64 {
    5.0e9
}

fn default_noise() -> Switch {
    Switch::On
}

impl RawSystem {
    fn into_params(self) -> Result<SystemParams> {
        if self.num_clients < 1 {
            return Err(Error::invalid(
                "system.num_clients",
                format!("must be >= 1, got {}", self.num_clients),
            ));
        }
        let n = self.num_clients as usize;
        let distances = match self.distance_m {
            Distances::Scalar(r) => vec![r; n],
            Distances::PerClient(v) if v.len() == n => v,
            Distances::PerClient(v) => {
                return Err(Error::invalid(
                    "system.distance_m",
                    format!("expected {n} entries (one per client), got {}", v.len()),
                ))
            }
        };
        for (field, value) in [
            ("system.antenna_gain_dbi", self.antenna_gain_dbi),
            ("system.ref_path_loss_db", self.ref_path_loss_db),
            ("system.noise_power_dbm", self.noise_power_dbm),
            ("system.max_tx_power_dbm", self.max_tx_power_dbm),
        ] {
            if !value.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        let params = SystemParams {
            antenna_gain: db_to_linear(self.antenna_gain_dbi),
            ref_path_loss: db_to_linear(self.ref_path_loss_db),
            path_loss_exponent: self.path_loss_exponent,
            noise_power: dbm_to_watts(self.noise_power_dbm),
            max_tx_power: dbm_to_watts(self.max_tx_power_dbm),
            carrier_freq: self.carrier_freq_hz,
            distances,
            noise_enabled: self.noise == Switch::On,
            fading: self.fading,
        };
        params.validate().map_err(|e| match e {
            Error::InvalidParam { field, reason } => Error::InvalidParam {
                field: format!("system.{field}"),
                reason,
            },
            other => other,
        })?;
        Ok(params)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrivacy {
    epsilon: f64,
    delta: f64,
    clip_threshold: f64,
    #[serde(default)]
    clip_norm: ClipNorm,
}

impl RawPrivacy {
    fn into_target(self) -> Result<PrivacyTarget> {
        PrivacyTarget::new(self.epsilon, self.delta, self.clip_threshold)
            .map(|t| t.with_clip_norm(self.clip_norm))
            .map_err(|e| match e {
                Error::InvalidParam { field, reason } => Error::InvalidParam {
                    field: format!("privacy.{field}"),
                    reason,
                },
                other => other,
            })
    }
}
