//! Static description of a simulated experiment, plus closed-form rate
//! predictions that serve as oracles for the Monte Carlo engine.

use std::fmt;
use thiserror::Error;
use crate::polarization::{
    self as pol, Arm, PolarizationChannel, PolarizationDensity, Projector,
    SourceKind, StateError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{name} must lie in [0, 1], got {value}")]
    Fraction { name: &'static str, value: f64 },

    #[error("{name} must be finite and non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },

    #[error("{0} must be positive")]
    NotPositive(&'static str),

    #[error("no closed form: {0}")]
    NoClosedForm(String),

    #[error(transparent)]
    State(#[from] StateError),
}

pub type ConfigResult<T> = Result<T, ConfigError>;

fn fraction(name: &'static str, value: f64) -> ConfigResult<()> {
    if (0.0..=1.0).contains(&value) { Ok(()) } else { Err(ConfigError::Fraction { name, value }) }
}

fn non_negative(name: &'static str, value: f64) -> ConfigResult<()> {
    if value.is_finite() && value >= 0.0 { Ok(()) } else { Err(ConfigError::Negative { name, value }) }
}

/// High-voltage pulse envelope of the Pockels driver, in nanoseconds.
///
/// Zero before the pulse starts, a linear ramp over `rise_ns`, flat at 1
/// for `flat_ns`, then a linear decay to zero over `fall_ns`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PulseShape {
    pub rise_ns: f64,
    pub flat_ns: f64,
    pub fall_ns: f64,
}

impl Default for PulseShape {
    fn default() -> Self {
        Self { rise_ns: 5.0, flat_ns: 100.0, fall_ns: 3500.0 }
    }
}

impl PulseShape {
    pub fn duration_ns(&self) -> f64 { self.rise_ns + self.flat_ns + self.fall_ns }

    pub fn flat_end_ns(&self) -> f64 { self.rise_ns + self.flat_ns }

    /// Normalized amplitude `t` nanoseconds after the pulse starts.
    pub fn amplitude(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else if t < self.rise_ns {
            t / self.rise_ns
        } else if t <= self.flat_end_ns() {
            1.0
        } else if t < self.duration_ns() {
            1.0 - (t - self.flat_end_ns()) / self.fall_ns
        } else {
            0.0
        }
    }

    fn validate(&self) -> ConfigResult<()> {
        non_negative("pulse.rise_ns", self.rise_ns)?;
        non_negative("pulse.flat_ns", self.flat_ns)?;
        non_negative("pulse.fall_ns", self.fall_ns)
    }
}

/// Driver protection: when more than `rate_threshold` triggers arrive within
/// the trailing second, the driver refuses pulses for `disable_duration_s`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DriverPolicy {
    pub rate_threshold: f64,
    pub disable_duration_s: f64,
}

impl Default for DriverPolicy {
    fn default() -> Self {
        Self { rate_threshold: 1e4, disable_duration_s: 1.0 }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DetectorParams {
    pub eta: f64,
    pub dead_time_ns: f64,
    pub dark_rate_hz: f64,
}

impl DetectorParams {
    pub fn new(eta: f64, dead_time_ns: f64, dark_rate_hz: f64) -> Self {
        Self { eta, dead_time_ns, dark_rate_hz }
    }
}

/// How the Pockels apparatus falls short of an ideal 90° rotation.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FailureModel {
    /// Always-on isotropic Stokes contraction `q` on the idler arm.
    UniformDepolarizer,
    /// Each requested rotation happens with probability `p`, otherwise the
    /// photon passes untouched.
    BernoulliIdentity,
}

impl FailureModel {
    pub fn name(self) -> &'static str {
        match self {
            Self::UniformDepolarizer => "uniform_depolarizer",
            Self::BernoulliIdentity => "bernoulli_identity",
        }
    }
}

impl std::str::FromStr for FailureModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform_depolarizer" => Ok(Self::UniformDepolarizer),
            "bernoulli_identity" => Ok(Self::BernoulliIdentity),
            other => Err(format!("unknown failure model '{other}'")),
        }
    }
}

impl fmt::Display for FailureModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result { f.write_str(self.name()) }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PockelsConfig {
    pub enabled: bool,
    /// Stokes contraction, used by [`FailureModel::UniformDepolarizer`].
    pub q: f64,
    /// Rotation success probability, used by [`FailureModel::BernoulliIdentity`].
    pub p: f64,
    pub failure_model: FailureModel,
    /// Rotation at full pulse amplitude.
    pub rotation_deg: f64,
    /// Time from a trigger click to the start of the high-voltage pulse.
    pub latency_ns: f64,
}

impl Default for PockelsConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            q: 0.832,
            p: 0.916,
            failure_model: FailureModel::UniformDepolarizer,
            rotation_deg: 90.0,
            latency_ns: 200.0,
        }
    }
}

impl PockelsConfig {
    /// The imperfection applied to every idler when no rotation is
    /// requested.
    pub fn idle_channel(&self) -> ConfigResult<PolarizationChannel> {
        Ok(match self.failure_model {
            FailureModel::UniformDepolarizer => pol::depolarizer(self.q)?,
            FailureModel::BernoulliIdentity => PolarizationChannel::identity(),
        })
    }

    /// Channel for an idler that meets the pulse at normalized amplitude
    /// `amplitude`.
    pub fn driven_channel(&self, amplitude: f64) -> ConfigResult<PolarizationChannel> {
        let rot = pol::rotator(amplitude * self.rotation_deg);
        Ok(match self.failure_model {
            FailureModel::UniformDepolarizer => rot.then(&pol::depolarizer(self.q)?),
            FailureModel::BernoulliIdentity => rot.mixture(&PolarizationChannel::identity(), self.p)?,
        })
    }
}

/// Coincidence circuit settings.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TacConfig {
    pub window_ns: f64,
    /// Delay inserted on the stop line.
    pub stop_delay_ns: f64,
}

impl Default for TacConfig {
    fn default() -> Self { Self { window_ns: 4.0, stop_delay_ns: 9.3 } }
}

/// Everything needed to simulate or predict one experiment.
///
/// Detector 1 sits behind the trigger projector (the detector under
/// calibration); detector 2 sits behind the analyzer on the idler arm.
/// In the coincidence (Klyshko) experiment detector 1 is the signal
/// detector and detector 2 the idler detector.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub pair_rate_hz: f64,
    pub source_kind: SourceKind,
    pub state_visibility: f64,
    /// Idler path transmittance α (fiber and Pockels cell).
    pub idler_path_loss: f64,
    pub trigger_projector: Projector,
    pub analyzer: Projector,
    pub pockels: PockelsConfig,
    pub fiber_delay_ns: f64,
    /// Extra delay between a trigger click and the high-voltage pulse.
    pub electronic_delay_ns: f64,
    pub pulse: PulseShape,
    pub driver: DriverPolicy,
    pub det1: DetectorParams,
    pub det2: DetectorParams,
    pub tac: TacConfig,
    pub background_rate_hz: f64,
}

impl Default for BenchConfig {
    /// The calibration set-up: uncompensated source, vertical trigger,
    /// 50 m of fiber on the idler arm.
    fn default() -> Self {
        Self {
            pair_rate_hz: 2000.0,
            source_kind: SourceKind::MixedHv,
            state_visibility: 1.0,
            idler_path_loss: 1.0,
            trigger_projector: Projector::ideal(90.0),
            analyzer: Projector::ideal(0.0),
            pockels: PockelsConfig::default(),
            fiber_delay_ns: 250.0,
            electronic_delay_ns: 0.0,
            pulse: PulseShape::default(),
            driver: DriverPolicy::default(),
            det1: DetectorParams::new(0.45, 40.0, 0.0),
            det2: DetectorParams::new(0.4, 40.0, 0.0),
            tac: TacConfig::default(),
            background_rate_hz: 0.0,
        }
    }
}

/// Count rates at one analyzer setting.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PredictedRates {
    pub singles: f64,
    pub coincidences: f64,
}

impl BenchConfig {
    pub fn validate(&self) -> ConfigResult<()> {
        non_negative("pair_rate_hz", self.pair_rate_hz)?;
        fraction("state_visibility", self.state_visibility)?;
        fraction("idler_path_loss", self.idler_path_loss)?;
        fraction("trigger_projector.transmittance", self.trigger_projector.transmittance)?;
        fraction("analyzer.transmittance", self.analyzer.transmittance)?;
        if !self.trigger_projector.angle_deg.is_finite() || !self.analyzer.angle_deg.is_finite() {
            return Err(ConfigError::Negative { name: "projector angle", value: f64::NAN });
        }
        fraction("pockels.q", self.pockels.q)?;
        fraction("pockels.p", self.pockels.p)?;
        if !self.pockels.rotation_deg.is_finite() {
            return Err(ConfigError::Negative { name: "pockels.rotation_deg", value: self.pockels.rotation_deg });
        }
        non_negative("pockels.latency_ns", self.pockels.latency_ns)?;
        non_negative("fiber_delay_ns", self.fiber_delay_ns)?;
        non_negative("electronic_delay_ns", self.electronic_delay_ns)?;
        self.pulse.validate()?;
        if !(self.driver.rate_threshold > 0.0) {
            return Err(ConfigError::NotPositive("driver.rate_threshold"));
        }
        non_negative("driver.disable_duration_s", self.driver.disable_duration_s)?;
        validate_detector(&self.det1, ["det1.eta", "det1.dead_time_ns", "det1.dark_rate_hz"])?;
        validate_detector(&self.det2, ["det2.eta", "det2.dead_time_ns", "det2.dark_rate_hz"])?;
        non_negative("tac.window_ns", self.tac.window_ns)?;
        non_negative("tac.stop_delay_ns", self.tac.stop_delay_ns)?;
        non_negative("background_rate_hz", self.background_rate_hz)?;
        Ok(())
    }

    /// Time of the idler's arrival at the Pockels cell, measured from the
    /// start of the pulse fired by its own partner.
    pub fn idler_pulse_offset_ns(&self) -> f64 {
        self.fiber_delay_ns - self.pockels.latency_ns - self.electronic_delay_ns
    }

    /// Pulse amplitude seen by a heralded idler.
    pub fn heralded_amplitude(&self) -> f64 {
        if self.pockels.enabled { self.pulse.amplitude(self.idler_pulse_offset_ns()) } else { 0.0 }
    }

    /// Conditional idler states and their weights per emitted pair.
    fn idler_branches(&self) -> ConfigResult<IdlerBranches> {
        let joint = pol::make_state(self.source_kind, self.state_visibility)?;
        let trig = &self.trigger_projector;
        let pass = joint.condition_on_effect(&trig.effect(), Arm::One).ok();
        let fail = joint.condition_on_effect(&trig.complement_effect(), Arm::One).ok();
        let idle = self.pockels.idle_channel()?;
        let driven = self.pockels.driven_channel(self.heralded_amplitude())?;
        let eta1 = self.det1.eta;
        let mut b = IdlerBranches::default();
        if let Some((p, rho)) = pass {
            let rotated = if self.pockels.enabled { &driven } else { &idle };
            b.clicked = Some((p * eta1, pol::apply_channel(&rho, rotated)));
            b.unclicked.push((p * (1.0 - eta1), pol::apply_channel(&rho, &idle)));
        }
        if let Some((p, rho)) = fail {
            b.unclicked.push((p, pol::apply_channel(&rho, &idle)));
        }
        Ok(b)
    }

    fn closed_form_guard(&self) -> ConfigResult<()> {
        self.validate()?;
        let b = self.idler_branches()?;
        let trigger_rate = self.pair_rate_hz * b.clicked.as_ref().map_or(0.0, |c| c.0)
            + self.det1.dark_rate_hz;
        if self.pockels.enabled && trigger_rate > self.driver.rate_threshold {
            return Err(ConfigError::NoClosedForm(format!(
                "expected trigger rate {trigger_rate:.1}/s exceeds the driver threshold")));
        }
        Ok(())
    }

    /// Expected pair-induced singles and coincidence rates with the analyzer
    /// at `theta_deg`. Dead time, dark counts, background and overlapping
    /// pulses from unrelated triggers are ignored.
    pub fn predict_rates(&self, theta_deg: f64) -> ConfigResult<PredictedRates> {
        self.closed_form_guard()?;
        let b = self.idler_branches()?;
        let analyzer = Projector { angle_deg: theta_deg, ..self.analyzer };
        let scale = self.pair_rate_hz * self.idler_path_loss * self.det2.eta;
        let clicked = b.clicked.as_ref()
            .map_or(0.0, |(w, rho)| w * rho.transmission(&analyzer));
        let unclicked: f64 = b.unclicked.iter()
            .map(|(w, rho)| w * rho.transmission(&analyzer))
            .sum();
        Ok(PredictedRates {
            singles: scale * (clicked + unclicked),
            coincidences: scale * clicked,
        })
    }

    /// Analyzer-arm singles rate; N₀·α·η₂·ε/2·[1 − η₁·q·cos 2θ] for the
    /// calibration set-up.
    pub fn predict_singles_rate(&self, theta_deg: f64) -> ConfigResult<f64> {
        Ok(self.predict_rates(theta_deg)?.singles)
    }

    /// (N(90°) − N(0°)) / (N(90°) + N(0°)) of the analyzer singles.
    pub fn predict_singles_visibility(&self) -> ConfigResult<f64> {
        let (v, h) = (self.predict_rates(90.0)?, self.predict_rates(0.0)?);
        Ok(contrast(v.singles, h.singles))
    }

    /// Same contrast for coincidences; independent of both efficiencies.
    pub fn predict_coincidence_visibility(&self) -> ConfigResult<f64> {
        let (v, h) = (self.predict_rates(90.0)?, self.predict_rates(0.0)?);
        Ok(contrast(v.coincidences, h.coincidences))
    }
}

fn validate_detector(d: &DetectorParams, names: [&'static str; 3]) -> ConfigResult<()> {
    fraction(names[0], d.eta)?;
    non_negative(names[1], d.dead_time_ns)?;
    non_negative(names[2], d.dark_rate_hz)
}

fn contrast(a: f64, b: f64) -> f64 {
    if a + b > 0.0 { (a - b) / (a + b) } else { 0.0 }
}

#[derive(Default)]
struct IdlerBranches {
    clicked: Option<(f64, PolarizationDensity)>,
    unclicked: Vec<(f64, PolarizationDensity)>,
}
