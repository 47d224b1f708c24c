//! Cross-correlograms between two timestamp streams and the g² statistics
//! derived from them.
//!
//! Lags are `signal − reference` in ticks. Bin `k` covers
//! `[lag_min + k·Δt, lag_min + (k+1)·Δt)`. Every ordered pair of clicks
//! whose lag falls in the grid is counted, so a bin of two independent
//! streams holds `N_s·N_r·Δt/T` counts on average.

use num_traits::FromPrimitive;
use rayon::prelude::*;
use thiserror::Error;

use crate::detector::TimestampStream;
use crate::num::{from_count, Scalar};

// keeps `tick ± lag` arithmetic inside i64
const TICK_LIMIT: u64 = (i64::MAX / 4) as u64;
const LAG_LIMIT: i64 = i64::MAX / 4;

/// Peak excess over background, in Poisson standard deviations, needed to
/// call a delay scan significant.
pub const PEAK_SIGNIFICANCE: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrelatorError {
    #[error("invalid correlogram config: {0}")]
    Config(String),
    #[error("tick units differ: {0} ps vs {1} ps")]
    TickMismatch(u32, u32),
    #[error("stream durations differ: {0} vs {1} ticks")]
    DurationMismatch(u64, u64),
    #[error("stream on channel {0} is not sorted")]
    Unsorted(u8),
    #[error("tick {0} out of supported range")]
    TickRange(u64),
    #[error("correlogram is empty, no peak to scan")]
    NoPeak,
    #[error("g2 undefined: {0}")]
    UndefinedG2(&'static str),
}

/// Lag grid of a correlogram, in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrelogramConfig {
    pub bin_width: u64,
    pub lag_min: i64,
    pub lag_max: i64,
}

impl CorrelogramConfig {
    pub fn new(bin_width: u64, lag_min: i64, lag_max: i64) -> Result<Self, CorrelatorError> {
        let cfg = Self { bin_width, lag_min, lag_max };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CorrelatorError> {
        let err = |m: String| Err(CorrelatorError::Config(m));
        if self.bin_width == 0 {
            return err("bin width must be at least one tick".into());
        }
        if self.lag_min >= self.lag_max {
            return err(format!("lag_min {} must be below lag_max {}", self.lag_min, self.lag_max));
        }
        if self.lag_min < -LAG_LIMIT || self.lag_max > LAG_LIMIT {
            return err("lag range too large".into());
        }
        let span = (self.lag_max - self.lag_min) as u64;
        if span % self.bin_width != 0 {
            return err(format!("lag span {span} not divisible by bin width {}", self.bin_width));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        ((self.lag_max - self.lag_min) as u64 / self.bin_width) as usize
    }

    /// Lower edge of bin `k`.
    pub fn bin_lag(&self, k: usize) -> i64 {
        self.lag_min + k as i64 * self.bin_width as i64
    }

    /// Bin containing `lag`, if on the grid.
    pub fn bin_of(&self, lag: i64) -> Option<usize> {
        (self.lag_min..self.lag_max)
            .contains(&lag)
            .then(|| ((lag - self.lag_min) as u64 / self.bin_width) as usize)
    }

    /// Grid restricted to bins `start..end`.
    fn sub_range(&self, start: usize, end: usize) -> Self {
        Self { bin_width: self.bin_width, lag_min: self.bin_lag(start), lag_max: self.bin_lag(end) }
    }
}

/// Histogram of signal−reference lags.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlogram {
    pub counts: Vec<u64>,
    /// Singles on the signal stream.
    pub singles_signal: u64,
    /// Singles on the reference stream.
    pub singles_reference: u64,
    /// Acquisition time, seconds.
    pub duration: f64,
    pub tick_ps: u32,
    pub config: CorrelogramConfig,
}

fn check_streams(a: &TimestampStream, b: &TimestampStream) -> Result<(), CorrelatorError> {
    if a.tick_ps != b.tick_ps {
        return Err(CorrelatorError::TickMismatch(a.tick_ps, b.tick_ps));
    }
    if a.duration_ticks != b.duration_ticks {
        return Err(CorrelatorError::DurationMismatch(a.duration_ticks, b.duration_ticks));
    }
    for s in [a, b] {
        if !s.is_sorted() {
            return Err(CorrelatorError::Unsorted(s.channel));
        }
        if let Some(&last) = s.ticks.last() {
            if last > TICK_LIMIT {
                return Err(CorrelatorError::TickRange(last));
            }
        }
    }
    Ok(())
}

/// Two-cursor sweep over sorted tick slices, adding into `counts`.
///
/// For each signal click `s` the reference clicks with lag in the grid are
/// exactly those in `(s − lag_max, s − lag_min]`; both window edges only move
/// forward as `s` increases.
fn sweep_into(signal: &[u64], reference: &[u64], cfg: &CorrelogramConfig, counts: &mut [u64]) {
    let w = cfg.bin_width as i64;
    let mut lo = 0usize;
    let mut hi = 0usize;
    let m = reference.len();
    for &s in signal {
        let s = s as i64;
        let open = s - cfg.lag_max;
        let closed = s - cfg.lag_min;
        while lo < m && reference[lo] as i64 <= open {
            lo += 1;
        }
        if hi < lo {
            hi = lo;
        }
        while hi < m && reference[hi] as i64 <= closed {
            hi += 1;
        }
        if w == 1 {
            for &r in &reference[lo..hi] {
                counts[(closed - r as i64) as usize] += 1;
            }
        } else {
            for &r in &reference[lo..hi] {
                counts[((s - r as i64 - cfg.lag_min) / w) as usize] += 1;
            }
        }
    }
}

fn assemble(
    a: &TimestampStream,
    b: &TimestampStream,
    cfg: CorrelogramConfig,
    counts: Vec<u64>,
) -> Correlogram {
    Correlogram {
        counts,
        singles_signal: a.len() as u64,
        singles_reference: b.len() as u64,
        duration: a.duration_seconds(),
        tick_ps: a.tick_ps,
        config: cfg,
    }
}

/// Correlogram of `signal` against `reference` in a single forward pass.
pub fn correlogram(
    signal: &TimestampStream,
    reference: &TimestampStream,
    cfg: &CorrelogramConfig,
) -> Result<Correlogram, CorrelatorError> {
    cfg.validate()?;
    check_streams(signal, reference)?;
    let mut counts = vec![0u64; cfg.bins()];
    sweep_into(&signal.ticks, &reference.ticks, cfg, &mut counts);
    Ok(assemble(signal, reference, *cfg, counts))
}

/// Same result as [`correlogram`], with the lag grid split into `parts`
/// slices counted on the rayon pool.
pub fn correlogram_par(
    signal: &TimestampStream,
    reference: &TimestampStream,
    cfg: &CorrelogramConfig,
    parts: usize,
) -> Result<Correlogram, CorrelatorError> {
    cfg.validate()?;
    check_streams(signal, reference)?;
    let bins = cfg.bins();
    let parts = parts.clamp(1, bins);
    let chunk = bins.div_ceil(parts);
    let counts: Vec<u64> = (0..bins)
        .step_by(chunk)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + chunk).min(bins);
            let sub = cfg.sub_range(start, end);
            let mut local = vec![0u64; end - start];
            sweep_into(&signal.ticks, &reference.ticks, &sub, &mut local);
            local
        })
        .flatten_iter()
        .collect();
    Ok(assemble(signal, reference, *cfg, counts))
}

impl Correlogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_width_seconds(&self) -> f64 {
        self.config.bin_width as f64 * self.tick_ps as f64 * 1e-12
    }

    pub fn lags(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.counts.len()).map(|k| self.config.bin_lag(k))
    }

    /// Element-wise sum of correlograms on the same grid.
    pub fn accumulate(&mut self, other: &Correlogram) {
        assert_eq!(self.config, other.config, "correlogram grids differ");
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.singles_signal += other.singles_signal;
        self.singles_reference += other.singles_reference;
        self.duration += other.duration;
    }

    /// Expected accidental counts per bin, `N_s·N_r·Δt/T`.
    pub fn expected_accidentals(&self) -> f64 {
        self.singles_signal as f64 * self.singles_reference as f64 * self.bin_width_seconds()
            / self.duration
    }

    /// Normalised second-order correlation per bin.
    pub fn g2<T: Scalar + FromPrimitive>(&self) -> Result<G2Estimate<T>, CorrelatorError> {
        if self.singles_signal == 0 || self.singles_reference == 0 {
            return Err(CorrelatorError::UndefinedG2("zero singles"));
        }
        if !(self.duration > 0.0) {
            return Err(CorrelatorError::UndefinedG2("non-positive duration"));
        }
        let duration: T = T::from_f64(self.duration).expect("duration representable");
        let width: T = T::from_f64(self.bin_width_seconds()).expect("bin width representable");
        let rate_s = from_count::<T>(self.singles_signal) / duration.clone();
        let rate_r = from_count::<T>(self.singles_reference) / duration.clone();
        let accidental_rate = rate_s * rate_r * width;
        let expected = accidental_rate.clone() * duration;
        let g2: Vec<T> = self.counts.iter().map(|&c| from_count::<T>(c) / expected.clone()).collect();
        let mut peak_bin = 0;
        for (k, v) in g2.iter().enumerate() {
            if *v > g2[peak_bin] {
                peak_bin = k;
            }
        }
        Ok(G2Estimate {
            peak_g2: g2[peak_bin].clone(),
            peak_lag: self.config.bin_lag(peak_bin),
            peak_bin,
            g2,
            accidental_rate,
        })
    }

    /// Locates the coincidence peak. Ties go to the bin whose lower edge is
    /// closest to zero lag.
    pub fn scan_peak(&self) -> Result<DelayScan, CorrelatorError> {
        let total = self.total();
        if total == 0 {
            return Err(CorrelatorError::NoPeak);
        }
        let mut best = 0usize;
        for k in 1..self.counts.len() {
            let (c, b) = (self.counts[k], self.counts[best]);
            let closer = self.config.bin_lag(k).unsigned_abs() < self.config.bin_lag(best).unsigned_abs();
            if c > b || (c == b && closer) {
                best = k;
            }
        }
        let peak = self.counts[best];
        let others = self.counts.len().saturating_sub(1).max(1);
        let background = (total - peak) as f64 / others as f64;
        let significant = peak as f64 - background > PEAK_SIGNIFICANCE * background.max(1.0).sqrt();
        Ok(DelayScan { bin: best, lag: self.config.bin_lag(best), counts: peak, background, significant })
    }
}

/// Result of a delay scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayScan {
    pub bin: usize,
    /// Lower edge of the peak bin, ticks.
    pub lag: i64,
    pub counts: u64,
    /// Mean counts of the other bins.
    pub background: f64,
    /// Peak stands more than [`PEAK_SIGNIFICANCE`] σ above background.
    pub significant: bool,
}

/// Builds the correlogram and returns its peak.
pub fn scan_delay(
    signal: &TimestampStream,
    reference: &TimestampStream,
    cfg: &CorrelogramConfig,
) -> Result<DelayScan, CorrelatorError> {
    correlogram(signal, reference, cfg)?.scan_peak()
}

/// g² per lag bin with its peak.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Estimate<T> {
    pub g2: Vec<T>,
    pub peak_bin: usize,
    /// Lower edge of the peak bin, ticks.
    pub peak_lag: i64,
    pub peak_g2: T,
    /// Expected accidental coincidences per second in one bin.
    pub accidental_rate: T,
}

/// Expected accidental coincidences per second, `(N + N_b)·N_r·τ`.
///
/// `signal_rate` is the pair-origin rate reaching the signal detector,
/// `noise_rate` the background rate there, `window` the coincidence window.
pub fn accidental_rate<T: Scalar>(signal_rate: T, noise_rate: T, reference_rate: T, window: T) -> T {
    (signal_rate + noise_rate) * reference_rate * window
}

/// Signal-to-noise ratio of a g² peak: the excess over the accidental level.
pub fn snr<T: Scalar>(g2_peak: T) -> T {
    g2_peak - T::one()
}
