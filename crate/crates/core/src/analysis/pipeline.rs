//! Full acquisition: pair source, background, return channel, two detectors.

use rand::Rng;

use super::AnalysisError;
use crate::config::ExperimentConfig;
use crate::detector::TimestampStream;
use crate::pairgen::{poisson_times, PairEmitter};
use crate::rng::{self, stream};

pub const SIGNAL_CHANNEL: u8 = 0;
pub const REFERENCE_CHANNEL: u8 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Sweep point index; selects an independent set of substreams. Point 0
    /// is the plain acquisition.
    pub point: usize,
    /// Block the signal arm before the analyser so only background reaches
    /// the signal detector.
    pub block_signal: bool,
}

/// Click streams of one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub signal: TimestampStream,
    pub reference: TimestampStream,
}

fn stream_id(opts: RunOptions, base: u64) -> u64 {
    rng::point_stream(opts.point, base)
}

fn merge_sorted(a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Runs the simulated experiment and returns both click streams.
///
/// Pairs are streamed rather than stored: the emitter is cloned so the
/// reference and signal arms replay the same emission sequence.
pub fn acquire(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Acquisition, AnalysisError> {
    cfg.validate()?;
    let seed = cfg.seed;
    let mut source = cfg.source.clone();
    source.pair_rate = cfg.effective_pair_rate();
    let emitter = PairEmitter::new(
        &source,
        cfg.duration,
        rng::substream(seed, stream_id(opts, stream::PAIRS)),
    )?;

    let mut ref_rng = rng::substream(seed, stream_id(opts, stream::REFERENCE_DETECTOR));
    let reference = cfg.reference_detector.detect_times(
        emitter.clone().map(|p| p.reference),
        REFERENCE_CHANNEL,
        cfg.duration,
        &mut ref_rng,
    )?;

    let mut channel_rng = rng::substream(seed, stream_id(opts, stream::CHANNEL));
    let pair_survival = if opts.block_signal {
        0.0
    } else {
        cfg.channel.pair_survival(Some(source.signal_polarization))
    };
    let mut pair_arrivals: Vec<f64> = if pair_survival > 0.0 {
        emitter
            .map(|p| p.signal)
            .filter(|_| channel_rng.random_bool(pair_survival))
            .collect()
    } else {
        Vec::new()
    };
    if source.pair_jitter_sigma > 0.0 {
        pair_arrivals.sort_by(f64::total_cmp);
    }

    let mut noise_rng = rng::substream(seed, stream_id(opts, stream::NOISE));
    let noise_survival = cfg.channel.noise_survival(cfg.noise.polarization());
    let noise_arrivals: Vec<f64> = poisson_times(cfg.noise.rate, cfg.duration, &mut noise_rng)
        .into_iter()
        .filter(|_| channel_rng.random_bool(noise_survival))
        .collect();

    let mut sig_rng = rng::substream(seed, stream_id(opts, stream::SIGNAL_DETECTOR));
    let signal = cfg.signal_detector.detect_times(
        merge_sorted(pair_arrivals, noise_arrivals),
        SIGNAL_CHANNEL,
        cfg.duration,
        &mut sig_rng,
    )?;
    Ok(Acquisition { signal, reference })
}

/// Closed-form rates for a configuration, assuming every pair's lag falls in
/// a single correlogram bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedRates {
    pub pair_rate: f64,
    /// Pair photons per second passing the signal detector's efficiency,
    /// before dead time.
    pub signal_pair_incident: f64,
    pub signal_noise_incident: f64,
    pub signal_observed: f64,
    pub reference_incident: f64,
    pub reference_observed: f64,
    /// True pair coincidences per second after both detectors' dead time.
    pub coincidences: f64,
    /// Accidental coincidences per second in one bin.
    pub accidentals_per_bin: f64,
    /// Predicted g² of the coincidence bin.
    pub peak_g2: f64,
}

impl ExpectedRates {
    pub fn signal_incident(&self) -> f64 {
        self.signal_pair_incident + self.signal_noise_incident
    }
}

pub fn expected_rates(cfg: &ExperimentConfig) -> ExpectedRates {
    let pair_rate = cfg.effective_pair_rate();
    let sd = &cfg.signal_detector;
    let rd = &cfg.reference_detector;
    let p_signal = cfg.channel.pair_survival(Some(cfg.source.signal_polarization)) * sd.efficiency;
    let signal_pair_incident = pair_rate * p_signal;
    let signal_noise_incident =
        cfg.noise.rate * cfg.channel.noise_survival(cfg.noise.polarization()) * sd.efficiency;
    let signal_incident = signal_pair_incident + signal_noise_incident;
    let reference_incident = pair_rate * rd.efficiency;
    let live_s = 1.0 / (1.0 + signal_incident * sd.dead_time);
    let live_r = 1.0 / (1.0 + reference_incident * rd.dead_time);
    let signal_observed = signal_incident * live_s;
    let reference_observed = reference_incident * live_r;
    let coincidences = pair_rate * p_signal * rd.efficiency * live_s * live_r;
    let bin = cfg.correlator.bin_width as f64 * cfg.tick_ps() as f64 * 1e-12;
    let accidentals_per_bin = signal_observed * reference_observed * bin;
    let peak_g2 = if accidentals_per_bin > 0.0 {
        1.0 + coincidences / accidentals_per_bin
    } else {
        f64::NAN
    };
    ExpectedRates {
        pair_rate,
        signal_pair_incident,
        signal_noise_incident,
        signal_observed,
        reference_incident,
        reference_observed,
        coincidences,
        accidentals_per_bin,
        peak_g2,
    }
}

/// Dead-time free pair coincidences per second: what the visibility model
/// calls `C_corr`, with only the reference arm's constant live fraction.
pub fn configured_pair_coincidences(cfg: &ExperimentConfig) -> f64 {
    let pair_rate = cfg.effective_pair_rate();
    let rd = &cfg.reference_detector;
    let reference_incident = pair_rate * rd.efficiency;
    pair_rate
        * cfg.channel.pair_survival(Some(cfg.source.signal_polarization))
        * cfg.signal_detector.efficiency
        * rd.efficiency
        / (1.0 + reference_incident * rd.dead_time)
}
