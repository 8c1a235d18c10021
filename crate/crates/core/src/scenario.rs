//! Plain-text `key = value` files for bench configurations and count
//! summaries.

use std::collections::BTreeMap;
use std::str::FromStr;
use thiserror::Error;
use crate::bench::{ BenchConfig, ConfigError, FailureModel };
use crate::polarization::SourceKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },

    #[error("line {line}: duplicate key '{key}'")]
    Duplicate { line: usize, key: String },

    #[error("unknown key '{0}'")]
    UnknownKey(String),

    #[error("missing required key '{0}'")]
    Missing(String),

    #[error("bad value for '{key}': {msg}")]
    Value { key: String, msg: String },

    #[error(transparent)]
    Config(#[from] ConfigError),
}

pub type ScenarioResult<T> = Result<T, ScenarioError>;

/// Parsed key/value pairs. Blank lines and `#` comments are skipped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> ScenarioResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() { continue; }
            let (k, v) = line.split_once('=').ok_or(ScenarioError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(ScenarioError::Syntax { line: i + 1 });
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ScenarioError::Duplicate { line: i + 1, key: k.to_string() });
            }
        }
        Ok(Self { entries })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> { self.entries.keys().map(String::as_str) }

    pub fn contains(&self, key: &str) -> bool { self.entries.contains_key(key) }

    pub fn raw(&self, key: &str) -> Option<&str> { self.entries.get(key).map(String::as_str) }

    /// Parsed value, or `None` if absent.
    pub fn get<T: FromStr>(&self, key: &str) -> ScenarioResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| ScenarioError::Value { key: key.into(), msg: e.to_string() }))
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> ScenarioResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| ScenarioError::Missing(key.into()))
    }

    /// Fails on the first key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> ScenarioResult<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(ScenarioError::UnknownKey(k.to_string())),
            None => Ok(()),
        }
    }
}

type Get = fn(&BenchConfig) -> f64;
type Set = fn(&mut BenchConfig, f64);

const NUMERIC: &[(&str, Get, Set)] = &[
    ("pair_rate_hz", |c| c.pair_rate_hz, |c, v| c.pair_rate_hz = v),
    ("state_visibility", |c| c.state_visibility, |c, v| c.state_visibility = v),
    ("idler_path_loss", |c| c.idler_path_loss, |c, v| c.idler_path_loss = v),
    ("trigger_projector.angle_deg", |c| c.trigger_projector.angle_deg, |c, v| c.trigger_projector.angle_deg = v),
    ("trigger_projector.transmittance", |c| c.trigger_projector.transmittance, |c, v| c.trigger_projector.transmittance = v),
    ("analyzer.angle_deg", |c| c.analyzer.angle_deg, |c, v| c.analyzer.angle_deg = v),
    ("analyzer.transmittance", |c| c.analyzer.transmittance, |c, v| c.analyzer.transmittance = v),
    ("pockels.q", |c| c.pockels.q, |c, v| c.pockels.q = v),
    ("pockels.p", |c| c.pockels.p, |c, v| c.pockels.p = v),
    ("pockels.rotation_deg", |c| c.pockels.rotation_deg, |c, v| c.pockels.rotation_deg = v),
    ("pockels.latency_ns", |c| c.pockels.latency_ns, |c, v| c.pockels.latency_ns = v),
    ("fiber_delay_ns", |c| c.fiber_delay_ns, |c, v| c.fiber_delay_ns = v),
    ("electronic_delay_ns", |c| c.electronic_delay_ns, |c, v| c.electronic_delay_ns = v),
    ("pulse.rise_ns", |c| c.pulse.rise_ns, |c, v| c.pulse.rise_ns = v),
    ("pulse.flat_ns", |c| c.pulse.flat_ns, |c, v| c.pulse.flat_ns = v),
    ("pulse.fall_ns", |c| c.pulse.fall_ns, |c, v| c.pulse.fall_ns = v),
    ("driver.rate_threshold", |c| c.driver.rate_threshold, |c, v| c.driver.rate_threshold = v),
    ("driver.disable_duration_s", |c| c.driver.disable_duration_s, |c, v| c.driver.disable_duration_s = v),
    ("det1.eta", |c| c.det1.eta, |c, v| c.det1.eta = v),
    ("det1.dead_time_ns", |c| c.det1.dead_time_ns, |c, v| c.det1.dead_time_ns = v),
    ("det1.dark_rate_hz", |c| c.det1.dark_rate_hz, |c, v| c.det1.dark_rate_hz = v),
    ("det2.eta", |c| c.det2.eta, |c, v| c.det2.eta = v),
    ("det2.dead_time_ns", |c| c.det2.dead_time_ns, |c, v| c.det2.dead_time_ns = v),
    ("det2.dark_rate_hz", |c| c.det2.dark_rate_hz, |c, v| c.det2.dark_rate_hz = v),
    ("tac.window_ns", |c| c.tac.window_ns, |c, v| c.tac.window_ns = v),
    ("tac.stop_delay_ns", |c| c.tac.stop_delay_ns, |c, v| c.tac.stop_delay_ns = v),
    ("background_rate_hz", |c| c.background_rate_hz, |c, v| c.background_rate_hz = v),
];

const SOURCE_KIND: &str = "source_kind";
const POCKELS_ENABLED: &str = "pockels.enabled";
const FAILURE_MODEL: &str = "pockels.failure_model";

/// All keys accepted in a configuration file.
pub fn config_keys() -> Vec<&'static str> {
    let mut keys: Vec<&str> = NUMERIC.iter().map(|(k, _, _)| *k).collect();
    keys.extend([SOURCE_KIND, POCKELS_ENABLED, FAILURE_MODEL]);
    keys
}

/// Parses and validates a configuration. Keys that are absent keep their
/// default values.
pub fn parse_config(text: &str) -> ScenarioResult<BenchConfig> {
    let kv = KeyValues::parse(text)?;
    kv.reject_unknown(&config_keys())?;
    let mut cfg = BenchConfig::default();
    for (key, _, set) in NUMERIC {
        if let Some(v) = kv.get::<f64>(key)? {
            if !v.is_finite() {
                return Err(ScenarioError::Value { key: key.to_string(), msg: "not finite".into() });
            }
            set(&mut cfg, v);
        }
    }
    if let Some(s) = kv.get::<SourceKind>(SOURCE_KIND)? { cfg.source_kind = s; }
    if let Some(b) = kv.get::<bool>(POCKELS_ENABLED)? { cfg.pockels.enabled = b; }
    if let Some(m) = kv.get::<FailureModel>(FAILURE_MODEL)? { cfg.pockels.failure_model = m; }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes every key, so the output parses back to the same configuration.
pub fn render_config(cfg: &BenchConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("{SOURCE_KIND} = {}\n", cfg.source_kind));
    out.push_str(&format!("{POCKELS_ENABLED} = {}\n", cfg.pockels.enabled));
    out.push_str(&format!("{FAILURE_MODEL} = {}\n", cfg.pockels.failure_model));
    for (key, get, _) in NUMERIC {
        out.push_str(&format!("{key} = {}\n", get(cfg)));
    }
    out
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn render_parse_round_trip(
            rate in 0.0..1e6f64, vis in 0.0..=1.0f64, eta1 in 0.0..=1.0f64, q in 0.0..=1.0f64,
            fiber in 0.0..5000.0f64, angle in -180.0..180.0f64, bern in any::<bool>(), enabled in any::<bool>(),
            kind in 0usize..3,
        ) {
            let mut cfg = BenchConfig::default();
            cfg.pair_rate_hz = rate;
            cfg.state_visibility = vis;
            cfg.det1.eta = eta1;
            cfg.pockels.q = q;
            cfg.pockels.enabled = enabled;
            cfg.fiber_delay_ns = fiber;
            cfg.analyzer.angle_deg = angle;
            cfg.source_kind = [SourceKind::PsiPlus, SourceKind::PhiMinus45, SourceKind::MixedHv][kind];
            if bern { cfg.pockels.failure_model = FailureModel::BernoulliIdentity; }
            prop_assert_eq!(parse_config(&render_config(&cfg)).unwrap(), cfg);
        }
    }
}
