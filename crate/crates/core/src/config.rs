//! Experiment configuration files.
//!
//! Configs are TOML. Every physical quantity carries its unit in the key name
//! (`_s`, `_ns`, `_ps`, `_m`, `_deg`, `_per_s`), and every validation failure
//! names the offending dotted key, e.g. `detector.signal.efficiency`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlator::CorrelogramConfig;
use crate::detector::DetectorModel;
use crate::pairgen::{Arrangement, ChannelModel, NoiseModel, Polarization, SourceModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.to_string() }
}

/// A complete simulated acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: SourceModel,
    pub noise: NoiseModel,
    pub channel: ChannelModel,
    pub signal_detector: DetectorModel,
    pub reference_detector: DetectorModel,
    pub correlator: CorrelogramConfig,
    /// Acquisition time, seconds.
    pub duration: f64,
    pub seed: u64,
    /// In the TC arrangement, scale the pair rate so the detected pair rate
    /// matches the TPC arrangement.
    pub match_tc_intensity: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        RawConfig::default().resolve().expect("default config is valid")
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        raw.resolve()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&RawConfig::from(self)).expect("config serialises")
    }

    /// Re-checks every field, reporting the dotted key of the first problem.
    pub fn validate(&self) -> Result<(), ConfigError> {
        RawConfig::from(self).resolve().map(|_| ())
    }

    pub fn tick_ps(&self) -> u32 {
        self.signal_detector.tick_ps().expect("validated tick")
    }

    /// Pair rate after the TC intensity match, if it applies.
    pub fn effective_pair_rate(&self) -> f64 {
        if self.channel.arrangement == Arrangement::Tc && self.match_tc_intensity {
            self.source.pair_rate * self.channel.tc_intensity_match(self.source.signal_polarization)
        } else {
            self.source.pair_rate
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    duration_s: f64,
    seed: u64,
    source: RawSource,
    noise: RawNoise,
    channel: RawChannel,
    detector: RawDetectors,
    correlator: RawCorrelator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSource {
    pair_rate_per_s: f64,
    pair_jitter_ps: f64,
    signal_extra_path_m: f64,
    reference_delay_ns: f64,
    signal_polarization: String,
    reference_polarization: String,
    match_tc_intensity: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawNoise {
    rate_per_s: f64,
    polarized: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawChannel {
    arrangement: String,
    object_reflectance: f64,
    collection_efficiency: f64,
    qwp_angle_deg: f64,
    depolarization_fraction: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDetectors {
    signal: RawDetector,
    reference: RawDetector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDetector {
    efficiency: f64,
    dead_time_ns: f64,
    tick_ps: u32,
    jitter_ps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawCorrelator {
    bin_width_ticks: u64,
    lag_min_ticks: i64,
    lag_max_ticks: i64,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            duration_s: 1.0,
            seed: 0,
            source: RawSource::default(),
            noise: RawNoise::default(),
            channel: RawChannel::default(),
            detector: RawDetectors::default(),
            correlator: RawCorrelator::default(),
        }
    }
}

impl Default for RawSource {
    fn default() -> Self {
        Self {
            pair_rate_per_s: 1.0e6,
            pair_jitter_ps: 0.0,
            signal_extra_path_m: crate::pairgen::DEFAULT_SIGNAL_EXTRA_PATH,
            reference_delay_ns: 0.0,
            signal_polarization: "H".into(),
            reference_polarization: "H".into(),
            match_tc_intensity: true,
        }
    }
}

impl Default for RawNoise {
    fn default() -> Self {
        Self { rate_per_s: 0.0, polarized: false }
    }
}

impl Default for RawChannel {
    fn default() -> Self {
        Self {
            arrangement: "tpc".into(),
            object_reflectance: crate::pairgen::DEFAULT_OBJECT_REFLECTANCE,
            collection_efficiency: 1.0,
            qwp_angle_deg: 0.0,
            depolarization_fraction: 0.0,
        }
    }
}

impl Default for RawDetector {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            dead_time_ns: crate::detector::DEFAULT_DEAD_TIME * 1e9,
            tick_ps: crate::detector::DEFAULT_TICK_PS,
            jitter_ps: 0.0,
        }
    }
}

impl Default for RawCorrelator {
    fn default() -> Self {
        Self { bin_width_ticks: 4, lag_min_ticks: -151, lag_max_ticks: 249 }
    }
}

fn non_negative(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be finite and non-negative, got {v}")))
    }
}

fn probability(key: &str, v: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be in [0, 1], got {v}")))
    }
}

/// Parses `H`, `V`, `RHC`, `LHC` or `linear:<degrees>`.
pub fn parse_polarization(text: &str) -> Option<Polarization> {
    match text.trim().to_ascii_uppercase().as_str() {
        "H" => Some(Polarization::H),
        "V" => Some(Polarization::V),
        "RHC" => Some(Polarization::Rhc),
        "LHC" => Some(Polarization::Lhc),
        other => {
            let deg: f64 = other.strip_prefix("LINEAR:")?.trim().parse().ok()?;
            Polarization::linear(deg.to_radians()).ok()
        }
    }
}

fn format_polarization(p: Polarization) -> String {
    match p {
        Polarization::H => "H".into(),
        Polarization::V => "V".into(),
        Polarization::Rhc => "RHC".into(),
        Polarization::Lhc => "LHC".into(),
        Polarization::Linear(a) => format!("linear:{}", a.to_degrees()),
    }
}

pub fn parse_arrangement(text: &str) -> Option<Arrangement> {
    match text.trim().to_ascii_lowercase().as_str() {
        "tpc" => Some(Arrangement::Tpc),
        "tc" => Some(Arrangement::Tc),
        _ => None,
    }
}

impl RawDetector {
    fn resolve(&self, prefix: &str) -> Result<DetectorModel, ConfigError> {
        let key = |k: &str| format!("{prefix}.{k}");
        if self.tick_ps == 0 {
            return Err(invalid(&key("tick_ps"), "must be at least 1"));
        }
        Ok(DetectorModel {
            efficiency: probability(&key("efficiency"), self.efficiency)?,
            dead_time: non_negative(&key("dead_time_ns"), self.dead_time_ns)? * 1e-9,
            tick: self.tick_ps as f64 * 1e-12,
            jitter_sigma: non_negative(&key("jitter_ps"), self.jitter_ps)? * 1e-12,
        })
    }

    fn from_model(m: &DetectorModel) -> Self {
        Self {
            efficiency: m.efficiency,
            dead_time_ns: m.dead_time * 1e9,
            tick_ps: m.tick_ps().unwrap_or(0),
            jitter_ps: m.jitter_sigma * 1e12,
        }
    }
}

impl RawConfig {
    fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let duration = self.duration_s;
        if !(duration.is_finite() && duration > 0.0) {
            return Err(invalid("duration_s", format!("must be positive, got {duration}")));
        }
        let s = &self.source;
        let source = SourceModel {
            pair_rate: non_negative("source.pair_rate_per_s", s.pair_rate_per_s)?,
            pair_jitter_sigma: non_negative("source.pair_jitter_ps", s.pair_jitter_ps)? * 1e-12,
            signal_extra_path: non_negative("source.signal_extra_path_m", s.signal_extra_path_m)?,
            reference_delay: non_negative("source.reference_delay_ns", s.reference_delay_ns)? * 1e-9,
            signal_polarization: parse_polarization(&s.signal_polarization).ok_or_else(|| {
                invalid("source.signal_polarization", format!("unknown state {:?}", s.signal_polarization))
            })?,
            reference_polarization: parse_polarization(&s.reference_polarization).ok_or_else(|| {
                invalid(
                    "source.reference_polarization",
                    format!("unknown state {:?}", s.reference_polarization),
                )
            })?,
            seed: self.seed,
        };
        let noise = NoiseModel {
            rate: non_negative("noise.rate_per_s", self.noise.rate_per_s)?,
            polarized: self.noise.polarized,
        };
        let c = &self.channel;
        if !c.qwp_angle_deg.is_finite() {
            return Err(invalid("channel.qwp_angle_deg", "must be finite"));
        }
        let channel = ChannelModel {
            arrangement: parse_arrangement(&c.arrangement).ok_or_else(|| {
                invalid("channel.arrangement", format!("expected \"tpc\" or \"tc\", got {:?}", c.arrangement))
            })?,
            object_reflectance: probability("channel.object_reflectance", c.object_reflectance)?,
            collection_efficiency: probability("channel.collection_efficiency", c.collection_efficiency)?,
            qwp_angle: c.qwp_angle_deg.to_radians(),
            depolarization_fraction: probability(
                "channel.depolarization_fraction",
                c.depolarization_fraction,
            )?,
        };
        let signal_detector = self.detector.signal.resolve("detector.signal")?;
        let reference_detector = self.detector.reference.resolve("detector.reference")?;
        if self.detector.signal.tick_ps != self.detector.reference.tick_ps {
            return Err(invalid("detector.reference.tick_ps", "must equal detector.signal.tick_ps"));
        }
        let k = &self.correlator;
        if k.bin_width_ticks == 0 {
            return Err(invalid("correlator.bin_width_ticks", "must be at least 1"));
        }
        if k.lag_min_ticks >= k.lag_max_ticks {
            return Err(invalid("correlator.lag_max_ticks", "must exceed correlator.lag_min_ticks"));
        }
        let correlator = CorrelogramConfig::new(k.bin_width_ticks, k.lag_min_ticks, k.lag_max_ticks)
            .map_err(|e| invalid("correlator", e))?;
        Ok(ExperimentConfig {
            source,
            noise,
            channel,
            signal_detector,
            reference_detector,
            correlator,
            duration,
            seed: self.seed,
            match_tc_intensity: s.match_tc_intensity,
        })
    }
}

impl From<&ExperimentConfig> for RawConfig {
    fn from(c: &ExperimentConfig) -> Self {
        Self {
            duration_s: c.duration,
            seed: c.seed,
            source: RawSource {
                pair_rate_per_s: c.source.pair_rate,
                pair_jitter_ps: c.source.pair_jitter_sigma * 1e12,
                signal_extra_path_m: c.source.signal_extra_path,
                reference_delay_ns: c.source.reference_delay * 1e9,
                signal_polarization: format_polarization(c.source.signal_polarization),
                reference_polarization: format_polarization(c.source.reference_polarization),
                match_tc_intensity: c.match_tc_intensity,
            },
            noise: RawNoise { rate_per_s: c.noise.rate, polarized: c.noise.polarized },
            channel: RawChannel {
                arrangement: match c.channel.arrangement {
                    Arrangement::Tpc => "tpc".into(),
                    Arrangement::Tc => "tc".into(),
                },
                object_reflectance: c.channel.object_reflectance,
                collection_efficiency: c.channel.collection_efficiency,
                qwp_angle_deg: c.channel.qwp_angle.to_degrees(),
                depolarization_fraction: c.channel.depolarization_fraction,
            },
            detector: RawDetectors {
                signal: RawDetector::from_model(&c.signal_detector),
                reference: RawDetector::from_model(&c.reference_detector),
            },
            correlator: RawCorrelator {
                bin_width_ticks: c.correlator.bin_width,
                lag_min_ticks: c.correlator.lag_min,
                lag_max_ticks: c.correlator.lag_max,
            },
        }
    }
}
