//! Single-photon detector model: efficiency, timing jitter, non-paralyzable
//! dead time and time-tagger quantization.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::num::Scalar;
use crate::pairgen::{poisson_times, RawEvent};
use crate::rng;

/// Dead time of the actively quenched APD, seconds.
pub const DEFAULT_DEAD_TIME: f64 = 18e-9;

/// Time-tagger resolution, picoseconds.
pub const DEFAULT_TICK_PS: u32 = 81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("efficiency must be in [0, 1], got {0}")]
    Efficiency(f64),
    #[error("dead time must be finite and non-negative, got {0}")]
    DeadTime(f64),
    #[error("jitter must be finite and non-negative, got {0}")]
    Jitter(f64),
    #[error("tick must be a positive whole number of picoseconds, got {0} s")]
    Tick(f64),
    #[error("duration must be finite and positive, got {0}")]
    Duration(f64),
    #[error("input events not sorted at index {index}")]
    Unsorted { index: usize },
    #[error("incident rates must be finite and non-negative, got {0}")]
    Rate(f64),
    #[error("observed rate times dead time is {0:?}, must be below 1")]
    SaturationOverflow(String),
}

/// Detector and time-tagger parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Non-paralyzable dead time, seconds.
    pub dead_time: f64,
    /// Time-tagger bin, seconds. Must be a whole number of picoseconds.
    pub tick: f64,
    /// Gaussian timing jitter, seconds.
    pub jitter_sigma: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            dead_time: DEFAULT_DEAD_TIME,
            tick: DEFAULT_TICK_PS as f64 * 1e-12,
            jitter_sigma: 0.0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(DetectorError::Efficiency(self.efficiency));
        }
        if !(self.dead_time.is_finite() && self.dead_time >= 0.0) {
            return Err(DetectorError::DeadTime(self.dead_time));
        }
        if !(self.jitter_sigma.is_finite() && self.jitter_sigma >= 0.0) {
            return Err(DetectorError::Jitter(self.jitter_sigma));
        }
        self.tick_ps()?;
        Ok(())
    }

    /// Tick length in whole picoseconds.
    pub fn tick_ps(&self) -> Result<u32, DetectorError> {
        let ps = self.tick * 1e12;
        let rounded = ps.round();
        if !(ps.is_finite() && rounded >= 1.0 && rounded <= u32::MAX as f64)
            || (ps - rounded).abs() > 1e-6 * rounded
        {
            return Err(DetectorError::Tick(self.tick));
        }
        Ok(rounded as u32)
    }

    /// Expected observed rate for Poisson input at `incident` per second.
    pub fn observed_rate(&self, incident: f64) -> f64 {
        incident / (1.0 + incident * self.dead_time)
    }

    /// Converts a photon arrival stream into a click stream.
    pub fn detect<R: Rng + ?Sized>(
        &self,
        events: &[RawEvent],
        channel: u8,
        duration: f64,
        rng: &mut R,
    ) -> Result<TimestampStream, DetectorError> {
        self.detect_times(events.iter().map(|e| e.time), channel, duration, rng)
    }

    /// [`DetectorModel::detect`] over bare arrival times.
    ///
    /// Efficiency thinning and jitter come first, then the dead-time filter in
    /// continuous time, then flooring to ticks. Arrivals outside
    /// `[0, duration)` after jitter are not recorded. Two accepted clicks in the
    /// same tick collapse to one.
    pub fn detect_times<I, R>(
        &self,
        times: I,
        channel: u8,
        duration: f64,
        rng: &mut R,
    ) -> Result<TimestampStream, DetectorError>
    where
        I: IntoIterator<Item = f64>,
        R: Rng + ?Sized,
    {
        self.validate()?;
        if !(duration.is_finite() && duration > 0.0) {
            return Err(DetectorError::Duration(duration));
        }
        let tick_ps = self.tick_ps()?;
        let jitter = (self.jitter_sigma > 0.0)
            .then(|| Normal::new(0.0, self.jitter_sigma).expect("validated sigma"));

        let mut arrivals = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for (index, t) in times.into_iter().enumerate() {
            if t < last || t.is_nan() {
                return Err(DetectorError::Unsorted { index });
            }
            last = t;
            if self.efficiency < 1.0 && !rng.random_bool(self.efficiency) {
                continue;
            }
            let t = match &jitter {
                Some(n) => t + n.sample(rng),
                None => t,
            };
            arrivals.push(t);
        }
        if jitter.is_some() {
            arrivals.sort_by(f64::total_cmp);
        }

        let duration_ticks = (duration / self.tick).ceil() as u64;
        let mut ticks = Vec::with_capacity(arrivals.len());
        let mut live_from = f64::NEG_INFINITY;
        for t in arrivals {
            if t < 0.0 || t >= duration || t < live_from {
                continue;
            }
            live_from = t + self.dead_time;
            let tick = (t / self.tick).floor() as u64;
            if ticks.last() != Some(&tick) {
                ticks.push(tick);
            }
        }
        Ok(TimestampStream { ticks, channel, tick_ps, duration_ticks })
    }
}

/// Sorted click times of one detector channel, in tagger ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampStream {
    pub ticks: Vec<u64>,
    pub channel: u8,
    pub tick_ps: u32,
    pub duration_ticks: u64,
}

impl TimestampStream {
    pub fn new(ticks: Vec<u64>, channel: u8, tick_ps: u32, duration_ticks: u64) -> Self {
        Self { ticks, channel, tick_ps, duration_ticks }
    }

    pub fn len(&self) -> usize {
        self.ticks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ticks.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.ticks.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn tick_seconds(&self) -> f64 {
        self.tick_ps as f64 * 1e-12
    }

    pub fn duration_seconds(&self) -> f64 {
        self.duration_ticks as f64 * self.tick_seconds()
    }

    /// Clicks per second over the stream duration.
    pub fn rate(&self) -> f64 {
        self.len() as f64 / self.duration_seconds()
    }
}

/// `1 / (1 − AV·t_d)`, the inverse live fraction of a detector whose observed
/// rate is `observed_rate` and whose dead time is `dead_time`.
pub fn correction_factor<T: Scalar>(observed_rate: T, dead_time: T) -> Result<T, DetectorError> {
    let duty = observed_rate * dead_time;
    if duty < T::zero() || duty >= T::one() {
        return Err(DetectorError::SaturationOverflow(format!("{duty:?}")));
    }
    Ok(T::one() / (T::one() - duty))
}

/// Correction factor of one saturation-curve point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correction {
    Factor(f64),
    /// `AV·t_d ≥ 1`: the detector is fully saturated.
    Overflow,
}

impl Correction {
    pub fn factor(self) -> Option<f64> {
        match self {
            Correction::Factor(d) => Some(d),
            Correction::Overflow => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub incident_rate: f64,
    pub observed_rate: f64,
    pub correction: Correction,
}

/// Simulates the detector on seeded Poisson input at each incident rate for
/// `duration` seconds and reports the observed rate and correction factor.
pub fn saturation_curve(
    model: &DetectorModel,
    incident_rates: &[f64],
    duration: f64,
    seed: u64,
) -> Result<Vec<RateReport>, DetectorError> {
    model.validate()?;
    if let Some(&bad) = incident_rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(DetectorError::Rate(bad));
    }
    incident_rates
        .iter()
        .enumerate()
        .map(|(i, &rate)| {
            let mut rng = rng::substream(seed, rng::point_stream(i, rng::stream::SATURATION));
            let arrivals = poisson_times(rate, duration, &mut rng);
            let clicks = model.detect_times(arrivals, 0, duration, &mut rng)?;
            let observed = clicks.len() as f64 / duration;
            let correction = match correction_factor(observed, model.dead_time) {
                Ok(d) => Correction::Factor(d),
                Err(_) => Correction::Overflow,
            };
            Ok(RateReport { incident_rate: rate, observed_rate: observed, correction })
        })
        .collect()
}
