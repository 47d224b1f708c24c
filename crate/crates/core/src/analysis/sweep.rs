//! Noise and QWP sweeps over the simulated pipeline.

use std::f64::consts::FRAC_PI_4;

use rayon::prelude::*;

use super::pipeline::{acquire, RunOptions};
use super::{fit_sinusoid, AnalysisError, QwpFit, VisibilityObservation};
use crate::config::ExperimentConfig;
use crate::correlator::{correlogram, Correlogram, CorrelatorError};
use crate::detector::correction_factor;
use crate::pairgen::Arrangement;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// `x` is the injected noise rate, photons per second.
    Noise,
    /// `x` is the QWP angle, radians.
    Qwp,
}

/// One point of a sweep, read at the coincidence bin. `g2` and `snr` are NaN
/// when a stream recorded no clicks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub x: f64,
    /// Coincidences in the peak bin.
    pub counts: u64,
    pub g2: f64,
    pub snr: f64,
    /// Poisson error of `counts`.
    pub sigma: f64,
    /// Peak-bin coincidences with the signal arm blocked (noise sweeps).
    pub accidentals: Option<u64>,
    /// Observed signal-detector rate AV, per second.
    pub signal_rate: f64,
    pub reference_rate: f64,
    /// `1/(1 − AV·t_d)` of the signal detector, if below saturation.
    pub correction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub index: usize,
    pub x: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub arrangement: Arrangement,
    pub points: Vec<SweepPoint>,
    /// Lower edge of the coincidence bin, ticks.
    pub peak_lag: i64,
    pub peak_bin: usize,
    pub failures: Vec<SweepFailure>,
}

impl SweepResult {
    pub fn x(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn snr(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.snr).collect()
    }

    /// Visibility inputs of every point that has a blocked-signal run.
    pub fn visibility_observations(&self) -> Vec<VisibilityObservation<f64>> {
        self.points
            .iter()
            .filter_map(|p| {
                p.accidentals.map(|a| VisibilityObservation {
                    c_max: p.counts as f64,
                    c_min: a as f64,
                    observed_rate: p.signal_rate,
                })
            })
            .collect()
    }

    /// Sinusoid fit of a QWP sweep with Poisson errors.
    pub fn fit_sinusoid(&self) -> Result<QwpFit<f64>, AnalysisError> {
        let x = self.x();
        let y: Vec<f64> = self.points.iter().map(|p| p.counts as f64).collect();
        fit_sinusoid(&x, &y, None)
    }
}

struct PointRun {
    main: Correlogram,
    blocked: Option<Correlogram>,
}

/// Runs one configuration at sweep index `point` and returns its correlogram,
/// plus a blocked-signal correlogram when asked.
pub fn run_point(
    cfg: &ExperimentConfig,
    point: usize,
    with_blocked: bool,
) -> Result<(Correlogram, Option<Correlogram>), AnalysisError> {
    let opts = RunOptions { point, block_signal: false };
    let acq = acquire(cfg, opts)?;
    let main = correlogram(&acq.signal, &acq.reference, &cfg.correlator)?;
    let blocked = if with_blocked {
        let acq = acquire(cfg, RunOptions { block_signal: true, ..opts })?;
        Some(correlogram(&acq.signal, &acq.reference, &cfg.correlator)?)
    } else {
        None
    };
    Ok((main, blocked))
}

fn expected_peak_bin(cfg: &ExperimentConfig) -> Option<usize> {
    let tick = cfg.tick_ps() as f64 * 1e-12;
    cfg.correlator.bin_of((cfg.source.expected_lag() / tick).floor() as i64)
}

/// Runs one sweep point per `(x, config)` pair, in parallel, and reads every
/// point at the coincidence bin of the summed correlogram.
pub fn sweep_configs(
    kind: SweepKind,
    configs: Vec<(f64, ExperimentConfig)>,
    with_blocked: bool,
) -> Result<SweepResult, AnalysisError> {
    let Some((_, first)) = configs.first().cloned() else {
        return Err(AnalysisError::Sweep("no sweep points".into()));
    };
    let runs: Vec<(usize, f64, Result<PointRun, AnalysisError>)> = configs
        .into_par_iter()
        .enumerate()
        .map(|(i, (x, cfg))| {
            let run = run_point(&cfg, i, with_blocked).map(|(main, blocked)| PointRun { main, blocked });
            (i, x, run)
        })
        .collect();

    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (index, x, run) in runs {
        match run {
            Ok(r) => ok.push((index, x, r)),
            Err(e) => failures.push(SweepFailure { index, x, message: e.to_string() }),
        }
    }
    if ok.is_empty() {
        return Err(AnalysisError::Sweep(format!("every point failed: {}", failures[0].message)));
    }

    let mut total = ok[0].2.main.clone();
    for (_, _, r) in &ok[1..] {
        total.accumulate(&r.main);
    }
    let peak_bin = match total.scan_peak() {
        Ok(scan) if scan.significant => scan.bin,
        _ => expected_peak_bin(&first)
            .ok_or_else(|| AnalysisError::Sweep("no coincidence peak on the lag grid".into()))?,
    };

    let dead_time = first.signal_detector.dead_time;
    let mut points = Vec::with_capacity(ok.len());
    for (index, x, r) in ok {
        let counts = r.main.counts[peak_bin];
        let g2 = match r.main.g2::<f64>() {
            Ok(est) => est.g2[peak_bin],
            // an extinguished point has no signal clicks; its counts are still data
            Err(CorrelatorError::UndefinedG2(_)) => f64::NAN,
            Err(e) => {
                failures.push(SweepFailure { index, x, message: e.to_string() });
                continue;
            }
        };
        let signal_rate = r.main.singles_signal as f64 / r.main.duration;
        points.push(SweepPoint {
            x,
            counts,
            g2,
            snr: crate::correlator::snr(g2),
            sigma: (counts as f64).sqrt(),
            accidentals: r.blocked.as_ref().map(|b| b.counts[peak_bin]),
            signal_rate,
            reference_rate: r.main.singles_reference as f64 / r.main.duration,
            correction: correction_factor(signal_rate, dead_time).ok(),
        });
    }
    Ok(SweepResult {
        kind,
        arrangement: first.channel.arrangement,
        points,
        peak_lag: first.correlator.bin_lag(peak_bin),
        peak_bin,
        failures,
    })
}

/// Runs the pipeline at each noise rate, with a blocked-signal run per point
/// for the accidental level.
pub fn sweep_noise(
    base: &ExperimentConfig,
    levels: &[f64],
    arrangement: Arrangement,
) -> Result<SweepResult, AnalysisError> {
    if levels.len() < 2 {
        return Err(AnalysisError::Sweep("need at least two noise levels".into()));
    }
    let configs = levels
        .iter()
        .map(|&rate| {
            let mut cfg = base.clone();
            cfg.noise.rate = rate;
            cfg.channel.arrangement = arrangement;
            (rate, cfg)
        })
        .collect();
    sweep_configs(SweepKind::Noise, configs, true)
}

/// Runs the TPC pipeline at each QWP angle (radians).
pub fn sweep_qwp(base: &ExperimentConfig, angles: &[f64]) -> Result<SweepResult, AnalysisError> {
    if angles.is_empty() || angles.iter().any(|a| !a.is_finite()) {
        return Err(AnalysisError::Sweep("angles must be finite and non-empty".into()));
    }
    let lo = angles.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = angles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < FRAC_PI_4 * (1.0 - 1e-9) {
        return Err(AnalysisError::Sweep("angles must cover at least a half-period (45°)".into()));
    }
    let configs = angles
        .iter()
        .map(|&theta| {
            let mut cfg = base.clone();
            cfg.channel.arrangement = Arrangement::Tpc;
            cfg.channel.qwp_angle = theta;
            (theta, cfg)
        })
        .collect();
    sweep_configs(SweepKind::Qwp, configs, false)
}

/// Matched-seed TPC and TC noise sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrangementComparison {
    pub tpc: SweepResult,
    pub tc: SweepResult,
    /// `SNR(TPC)/SNR(TC)` per noise level.
    pub ratios: Vec<f64>,
}

pub fn compare_arrangements(
    base: &ExperimentConfig,
    levels: &[f64],
) -> Result<ArrangementComparison, AnalysisError> {
    let tpc = sweep_noise(base, levels, Arrangement::Tpc)?;
    let tc = sweep_noise(base, levels, Arrangement::Tc)?;
    let ratios = tpc
        .points
        .iter()
        .zip(&tc.points)
        .map(|(a, b)| a.snr / b.snr)
        .collect();
    Ok(ArrangementComparison { tpc, tc, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.duration = 0.05;
        c.source.pair_rate = 1.0e6;
        c.reference_detector.efficiency = 0.1;
        c.signal_detector.efficiency = 0.5;
        c
    }

    #[test]
    fn noise_free_point_has_best_snr() {
        let sweep = sweep_noise(&base(), &[0.0, 2.0e5, 1.0e6], Arrangement::Tpc).unwrap();
        assert!(sweep.failures.is_empty());
        let snr = sweep.snr();
        assert!(snr[0] > snr[1] && snr[1] > snr[2], "{snr:?}");
        assert_eq!(sweep.peak_lag, 49);
        assert!(sweep.points.iter().all(|p| p.accidentals.is_some()));
    }

    #[test]
    fn sweep_is_reproducible() {
        let a = sweep_noise(&base(), &[0.0, 1.0e6], Arrangement::Tc).unwrap();
        let b = sweep_noise(&base(), &[0.0, 1.0e6], Arrangement::Tc).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_sweeps() {
        assert!(sweep_noise(&base(), &[0.0], Arrangement::Tpc).is_err());
        assert!(sweep_qwp(&base(), &[0.0, 0.1]).is_err());
    }

    #[test]
    fn per_point_failures_do_not_stop_the_sweep() {
        let sweep = sweep_noise(&base(), &[0.0, -1.0, 1.0e5], Arrangement::Tpc).unwrap();
        assert_eq!(sweep.points.len(), 2);
        assert_eq!(sweep.failures.len(), 1);
        assert_eq!(sweep.failures[0].index, 1);
    }
}
