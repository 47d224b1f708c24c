//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line per criterion and exits non-zero if any failed.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qicorr::analysis::{
    acquire, compare_arrangements, configured_pair_coincidences, expected_rates, fit_visibility_curve,
    sweep_noise, sweep_qwp, visibility, visibility_model, CorrectionMode, RunOptions,
};
use qicorr::correlator::{correlogram, CorrelogramConfig};
use qicorr::detector::{correction_factor, saturation_curve, DetectorModel, TimestampStream};
use qicorr::pairgen::{poisson_times, Arrangement};
use qicorr::rng::substream;
use qicorr::tsfile::TimestampFile;
use qicorr::ExperimentConfig;

const MATCHED_G2: &str = include_str!("../../../configs/matched_g2.toml");
const TC_TPC_REFERENCE: &str = include_str!("../../../configs/tc_tpc_reference.toml");

type Outcome = (bool, String);

fn reference_config() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(TC_TPC_REFERENCE).expect("reference config parses")
}

fn brute_force(signal: &[u64], reference: &[u64], grid: &CorrelogramConfig) -> Vec<u64> {
    let mut counts = vec![0u64; grid.bins()];
    let (lo, hi, w) = (grid.lag_min as i128, grid.lag_max as i128, grid.bin_width as i128);
    for &s in signal {
        for &r in reference {
            let lag = s as i128 - r as i128;
            if lag >= lo && lag < hi {
                counts[((lag - lo) / w) as usize] += 1;
            }
        }
    }
    counts
}

fn random_ticks(rng: &mut ChaCha8Rng, n: usize, span: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (0..n).map(|_| rng.random_range(0..span)).collect();
    v.sort_unstable();
    v
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let span = rng.random_range(1..50_000u64);
        let ns = rng.random_range(0..=2000);
        let nr = rng.random_range(0..=2000);
        let signal = random_ticks(&mut rng, ns, span);
        let reference = random_ticks(&mut rng, nr, span);
        let width = rng.random_range(1..=20u64);
        let bins = rng.random_range(1..=100i64);
        let lag_min = rng.random_range(-600..=100i64);
        let grid = CorrelogramConfig::new(width, lag_min, lag_min + bins * width as i64).unwrap();
        let s = TimestampStream::new(signal, 0, 81, span);
        let r = TimestampStream::new(reference, 1, 81, span);
        let fast = correlogram(&s, &r, &grid).unwrap();
        if fast.counts != brute_force(&s.ticks, &r.ticks, &grid) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (mismatches == 0 && secs < 60.0, format!("{mismatches} mismatches in 1000 instances, {secs:.1} s"))
}

fn g2_baseline() -> Outcome {
    let detector = DetectorModel { dead_time: 0.0, ..Default::default() };
    let grid = CorrelogramConfig::new(4, -151, 249).unwrap();
    let (rate, duration) = (1.0e5, 10.0);
    let (mut inside, mut total) = (0usize, 0usize);
    let mut min_expected = f64::INFINITY;
    for seed in 0..20u64 {
        let mut rng = substream(seed, 100);
        let s = detector.detect_times(poisson_times(rate, duration, &mut rng), 0, duration, &mut rng).unwrap();
        let r = detector.detect_times(poisson_times(rate, duration, &mut rng), 1, duration, &mut rng).unwrap();
        let c = correlogram(&s, &r, &grid).unwrap();
        let expected = c.expected_accidentals();
        min_expected = min_expected.min(expected);
        let eps = 4.0 / expected.sqrt();
        let g2 = c.g2::<f64>().unwrap();
        inside += g2.g2.iter().filter(|&&g| (g - 1.0).abs() <= eps).count();
        total += g2.g2.len();
    }
    let frac = inside as f64 / total as f64;
    (
        frac >= 0.99,
        format!("{:.2}% of {total} bins within 4/sqrt(expected), expected >= {min_expected:.1}", 100.0 * frac),
    )
}

fn matched_g2_run() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::from_toml_str(MATCHED_G2).unwrap();
    let acq = acquire(&cfg, RunOptions::default()).unwrap();
    let c = correlogram(&acq.signal, &acq.reference, &cfg.correlator).unwrap();
    let est = c.g2::<f64>().unwrap();
    let predicted = expected_rates(&cfg).peak_g2;
    let rate = est.g2[est.peak_bin] * est.accidental_rate;
    let rel = (est.peak_g2 - predicted).abs() / predicted;
    let secs = start.elapsed().as_secs_f64();
    (
        rel < 0.10 && (rate - 5300.0).abs() <= 100.0 && secs < 120.0,
        format!(
            "peak g2 {:.1} at lag {}, predicted {predicted:.1} ({:.1}% off), {rate:.0} coincidences/s, \
             singles {:.0}/s and {:.0}/s, {secs:.1} s",
            est.peak_g2,
            est.peak_lag,
            100.0 * rel,
            acq.signal.rate(),
            acq.reference.rate()
        ),
    )
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

fn accidentals_linearity() -> Outcome {
    let mut cfg = reference_config();
    cfg.source.pair_rate = 1.0e6;
    cfg.reference_detector.efficiency = 1.0;
    cfg.duration = 5.0;
    let levels: Vec<f64> = (1..=10).map(|i| 4.0e5 * i as f64).collect();
    let sweep = sweep_noise(&cfg, &levels, Arrangement::Tpc).unwrap();
    let acc: Vec<f64> = sweep.points.iter().map(|p| p.accidentals.unwrap() as f64).collect();
    let r2 = r_squared(&sweep.x(), &acc);
    (
        r2 > 0.99 && sweep.failures.is_empty(),
        format!("R^2 = {r2:.5}, blocked counts {:.0} to {:.0}", acc[0], acc[acc.len() - 1]),
    )
}

fn tpc_advantage() -> Outcome {
    let cfg = reference_config();
    let levels: Vec<f64> = (0..10).map(|i| 1.0e5 + i as f64 * (2.0e6 - 1.0e5) / 9.0).collect();
    let cmp = compare_arrangements(&cfg, &levels).unwrap();
    let r = &cmp.ratios;
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / mean;
    (
        r.len() == levels.len() && lo > 1.0 && spread <= 0.15 && lo >= 2.5 && hi <= 3.2,
        format!("SNR ratio {lo:.3} to {hi:.3}, mean {mean:.3}, spread {:.1}%", 100.0 * spread),
    )
}

fn dead_time_law() -> Outcome {
    let model = DetectorModel::default();
    let (rate, duration) = (1.0e6, 1.0);
    let report = saturation_curve(&model, &[rate], duration, 3).unwrap()[0];
    let expected = model.observed_rate(rate);
    // renewal process: Fano factor of the counts is (1 + R·t_d)^-2
    let sigma = (expected * duration).sqrt() / (1.0 + rate * model.dead_time) / duration;
    let z = (report.observed_rate - expected) / sigma;

    let ideal = DetectorModel { dead_time: 0.0, ..model };
    let window = 4.0 * 81e-12;
    let mut rng = substream(3, 200);
    let arrivals_s = poisson_times(1.0e6, duration, &mut rng);
    let arrivals_r = poisson_times(5.0e5, duration, &mut rng);
    let s = model.detect_times(arrivals_s.iter().copied(), 0, duration, &mut rng).unwrap();
    let r = model.detect_times(arrivals_r.iter().copied(), 1, duration, &mut rng).unwrap();
    let s0 = ideal.detect_times(arrivals_s, 0, duration, &mut rng).unwrap();
    let r0 = ideal.detect_times(arrivals_r, 1, duration, &mut rng).unwrap();
    let (av_s, av_r) = (s.rate(), r.rate());
    let corrected = correction_factor(av_s, model.dead_time).unwrap()
        * av_s
        * correction_factor(av_r, model.dead_time).unwrap()
        * av_r
        * window;
    let truth = s0.rate() * r0.rate() * window;
    let rel = (corrected - truth).abs() / truth;
    (
        z.abs() <= 3.0 && rel < 0.01,
        format!(
            "observed {:.0}/s vs {expected:.0}/s (z = {z:+.2}); corrected accidentals {corrected:.3e}/s vs \
             {truth:.3e}/s ({:.3}% off)",
            report.observed_rate,
            100.0 * rel
        ),
    )
}

fn visibility_identity_and_fit() -> Outcome {
    let mut identity = true;
    for c_corr in 0..30i64 {
        for c_ac in 0..30i64 {
            for (n, m) in [(1i64, 1i64), (1009, 1000), (7, 5), (13, 11)] {
                let (cc, ca, d) = (Rational64::from(c_corr), Rational64::from(c_ac), Rational64::new(n, m));
                if c_corr + c_ac == 0 {
                    continue;
                }
                let lhs = visibility_model(cc, ca, d).unwrap();
                let rhs = visibility(cc + ca * d, ca * d).unwrap();
                identity &= lhs == rhs;
            }
        }
    }
    let unity = visibility(1234.0, 0.0).unwrap() == 1.0 && visibility_model(1234.0, 0.0, 1.05).unwrap() == 1.0;

    let cfg = reference_config();
    let levels: Vec<f64> = (0..10).map(|i| 5.0e5 + i as f64 * 8.5e5).collect();
    let sweep = sweep_noise(&cfg, &levels, Arrangement::Tpc).unwrap();
    let configured = configured_pair_coincidences(&cfg) * cfg.duration;
    let fit = fit_visibility_curve(&sweep.visibility_observations(), 0.0, &cfg.signal_detector, CorrectionMode::Apply)
        .unwrap();
    let z = (fit.c_corr - configured) / fit.c_corr_sigma;
    (
        identity && unity && z.abs() <= 3.0,
        format!(
            "identity {}, V(C_ac=0) = 1 {}, fitted C_corr {:.1} +- {:.1} vs configured {configured:.1} (z = {z:+.2})",
            if identity { "exact" } else { "BROKEN" },
            if unity { "holds" } else { "FAILS" },
            fit.c_corr,
            fit.c_corr_sigma
        ),
    )
}

fn qwp_extinction() -> Outcome {
    let mut cfg = reference_config();
    cfg.source.pair_rate = 1.0e6;
    cfg.reference_detector.efficiency = 0.5;
    cfg.channel.depolarization_fraction = 0.0;
    cfg.noise.rate = 0.0;
    let angles: Vec<f64> = (0..=12).map(|i| (i as f64 * 7.5).to_radians()).collect();
    let quiet = sweep_qwp(&cfg, &angles).unwrap();
    let fit = quiet.fit_sinusoid().unwrap();
    let floor_ok = quiet.points.len() == angles.len() && fit.floor.abs() <= 3.0 * fit.floor_sigma;
    let p45 = *quiet.points.iter().find(|p| (p.x - PI / 4.0).abs() < 1e-9).expect("45 degree point");
    let acc45 = p45.signal_rate * p45.reference_rate * 4.0 * 81e-12 * cfg.duration;
    let min_ok = p45.counts as f64 <= acc45 + 3.0 * acc45.max(1.0).sqrt();

    let noise = [5.0e5, 1.0e6, 2.0e6];
    let mut floors = Vec::new();
    for &nb in &noise {
        let mut c = cfg.clone();
        c.noise.rate = nb;
        let f = sweep_qwp(&c, &angles).unwrap().fit_sinusoid().unwrap();
        floors.push((f.floor, f.floor_sigma));
    }
    // weighted slope through the origin, then every floor within 3σ of it
    let (num, den) = noise.iter().zip(&floors).fold((0.0, 0.0), |(n, d), (&x, &(y, s))| {
        (n + x * y / (s * s), d + x * x / (s * s))
    });
    let slope = num / den;
    let proportional = noise.iter().zip(&floors).all(|(&x, &(y, s))| (y - slope * x).abs() <= 3.0 * s)
        && floors.windows(2).all(|w| w[1].0 > w[0].0);
    (
        floor_ok && min_ok && proportional,
        format!(
            "noise-free floor {:.2} +- {:.2}, 45 deg counts {} (accidentals {acc45:.2}); floors {}",
            fit.floor,
            fit.floor_sigma,
            p45.counts,
            floors.iter().map(|(f, s)| format!("{f:.1}+-{s:.1}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn determinism_and_round_trip() -> Outcome {
    let mut cfg = reference_config();
    cfg.duration = 0.2;
    let bytes = |cfg: &ExperimentConfig| {
        let a = acquire(cfg, RunOptions::default()).unwrap();
        TimestampFile::from_streams(&[&a.signal, &a.reference]).unwrap().to_bytes()
    };
    let first = bytes(&cfg);
    let identical = first == bytes(&cfg);
    cfg.seed += 1;
    let differs = first != bytes(&cfg);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut lossless = 0;
    for _ in 0..10_000 {
        let channels = rng.random_range(0..=4usize);
        let file = TimestampFile {
            tick_ps: rng.random_range(1..=1000),
            channels: (0..channels)
                .map(|_| {
                    let n = rng.random_range(0..50);
                    let span = rng.random_range(1..u64::MAX);
                    random_ticks(&mut rng, n, span)
                })
                .collect(),
        };
        if TimestampFile::parse(&file.to_bytes()).ok().as_ref() == Some(&file) {
            lossless += 1;
        }
    }
    (
        identical && differs && lossless == 10_000,
        format!(
            "same seed identical: {identical}, new seed differs: {differs}, {lossless}/10000 files round-trip"
        ),
    )
}

fn exponential_ticks(rng: &mut ChaCha8Rng, n: usize, mean_gap: f64) -> Vec<u64> {
    let mut t = 0.0f64;
    (0..n)
        .map(|_| {
            t += -mean_gap * (1.0 - rng.random::<f64>()).ln();
            t as u64
        })
        .collect()
}

fn throughput() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    // 1e7 events per stream at about 1e6 per second on 81 ps ticks
    let gap = 1.0e-6 / 81e-12;
    let s = exponential_ticks(&mut rng, 10_000_000, gap);
    let r = exponential_ticks(&mut rng, 10_000_000, gap);
    let end = s.last().unwrap().max(r.last().unwrap()) + 1;
    let s = TimestampStream::new(s, 0, 81, end);
    let r = TimestampStream::new(r, 1, 81, end);
    let grid = CorrelogramConfig::new(4, -151, 249).unwrap();
    let start = Instant::now();
    let c = correlogram(&s, &r, &grid).unwrap();
    let secs = start.elapsed().as_secs_f64();
    (secs < 2.0, format!("2e7 events in {secs:.3} s single-threaded, {} coincidences", c.total()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("correlator oracle equivalence", oracle_equivalence),
        ("g2 baseline", g2_baseline),
        ("matched noise-free g2 run", matched_g2_run),
        ("accidentals linearity", accidentals_linearity),
        ("TPC advantage", tpc_advantage),
        ("dead-time law", dead_time_law),
        ("visibility identity and fit", visibility_identity_and_fit),
        ("QWP extinction", qwp_extinction),
        ("determinism and round-trip", determinism_and_round_trip),
        ("throughput", throughput),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(outcome) => outcome,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
