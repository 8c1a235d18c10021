//! Seeded, deterministic Monte Carlo of the two experiments.
//!
//! A run emits pairs as a Poisson process, routes each photon through the
//! configured optics, and produces one time-ordered detection stream per
//! detector. Coincidences are counted from those streams by a
//! start/stop coincidence circuit model ([`tac_coincidences`]).

use std::fmt;
use thiserror::Error;
use crate::bench::{ BenchConfig, ConfigError };

mod engine;
mod events;
mod rng;
mod scan;
mod tac;

pub use engine::{ run_conditional_experiment, run_klyshko_experiment, simulate };
pub use events::{ read_events_csv, write_events_csv };
pub use rng::{ subseed, RngSeed };
pub use scan::{ scan_delay, scan_theta, DelayPoint, ThetaPoint };
pub use tac::tac_coincidences;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{channel} stream is not time-ordered at index {index}")]
    Unordered { channel: &'static str, index: usize },

    #[error("duration must be finite and non-negative, got {0}")]
    BadDuration(f64),

    #[error("malformed event record on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type SimResultT<T> = Result<T, SimError>;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Channel { Trigger, Analyzer }

impl Channel {
    pub fn name(self) -> &'static str {
        match self { Self::Trigger => "trigger", Self::Analyzer => "analyzer" }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Origin { Pair, Dark, Background }

impl Origin {
    pub fn name(self) -> &'static str {
        match self { Self::Pair => "pair", Self::Dark => "dark", Self::Background => "background" }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result { f.write_str(self.name()) }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result { f.write_str(self.name()) }
}

/// One registered detector click.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DetectionRecord {
    pub channel: Channel,
    pub time_ns: f64,
    pub origin: Origin,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Experiment {
    /// Trigger-conditioned Pockels rotation with a polarizer on the idler.
    Conditional,
    /// Two bare detectors, Pockels cell out of the beam.
    Klyshko,
}

impl std::str::FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "conditional" => Ok(Self::Conditional),
            "klyshko" => Ok(Self::Klyshko),
            other => Err(format!("unknown experiment '{other}'")),
        }
    }
}

/// Aggregated counts of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub duration_s: f64,
    pub pairs_emitted: u64,
    pub singles_trigger: u64,
    pub singles_analyzer: u64,
    pub coincidences: u64,
    pub pulses_fired: u64,
    pub driver_trips: u64,
    pub config: BenchConfig,
    pub seed: u64,
}

impl SimResult {
    /// Sum the counts of an independent run of the same configuration.
    pub fn merge(&self, other: &Self) -> Self {
        Self {
            duration_s: self.duration_s + other.duration_s,
            pairs_emitted: self.pairs_emitted + other.pairs_emitted,
            singles_trigger: self.singles_trigger + other.singles_trigger,
            singles_analyzer: self.singles_analyzer + other.singles_analyzer,
            coincidences: self.coincidences + other.coincidences,
            pulses_fired: self.pulses_fired + other.pulses_fired,
            driver_trips: self.driver_trips + other.driver_trips,
            config: self.config.clone(),
            seed: self.seed,
        }
    }

    pub fn trigger_rate(&self) -> f64 { rate(self.singles_trigger, self.duration_s) }

    pub fn analyzer_rate(&self) -> f64 { rate(self.singles_analyzer, self.duration_s) }

    pub fn coincidence_rate(&self) -> f64 { rate(self.coincidences, self.duration_s) }
}

fn rate(n: u64, t: f64) -> f64 { if t > 0.0 { n as f64 / t } else { 0.0 } }

/// Full output of a run: the counts and both detection streams.
#[derive(Clone, Debug)]
pub struct Run {
    pub result: SimResult,
    pub trigger: Vec<DetectionRecord>,
    pub analyzer: Vec<DetectionRecord>,
}

impl From<crate::polarization::StateError> for SimError {
    fn from(e: crate::polarization::StateError) -> Self { Self::Config(e.into()) }
}
