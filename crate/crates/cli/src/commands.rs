use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use qicorr::analysis::{
    fit_sinusoid, fit_visibility_curve, sweep_configs, AnalysisError, CorrectionMode, SweepKind, SweepResult,
    VisibilityObservation, REFERENCE_CHANNEL, SIGNAL_CHANNEL,
};
use qicorr::correlator::{correlogram, CorrelogramConfig};
use qicorr::detector::{saturation_curve, DetectorModel};
use qicorr::fit::FitError;
use qicorr::pairgen::Arrangement;
use qicorr::tsfile::TimestampFile;
use qicorr::{ConfigError, ExperimentConfig};

use crate::{ArrangementArg, FitArg, GridArgs, RunArgs, SweepArg};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Fit(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Fit(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Fit(m) => write!(f, "fit: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::NoConvergence(_) | FitError::Degenerate(_) => CliError::Fit(e.to_string()),
            FitError::TooFewPoints { .. } | FitError::NonFinite(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Config(e) => e.into(),
            AnalysisError::Fit(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn load_run_config(run: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&run.config)?;
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(a) = run.arrangement {
        cfg.channel.arrangement = match a {
            ArrangementArg::Tc => Arrangement::Tc,
            ArrangementArg::Tpc => Arrangement::Tpc,
        };
    }
    if let Some(t) = run.duration_s {
        cfg.duration = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_grid(base: CorrelogramConfig, grid: &GridArgs) -> Result<CorrelogramConfig, CliError> {
    let mut cfg = base;
    if let Some(w) = grid.bins {
        cfg.bin_width = w;
    }
    if let Some(range) = &grid.lag_range {
        let parsed = range
            .split_once(':')
            .and_then(|(a, b)| Some((a.trim().parse::<i64>().ok()?, b.trim().parse::<i64>().ok()?)));
        let Some((lo, hi)) = parsed else {
            return Err(CliError::Config(format!("--lag-range: expected MIN:MAX in ticks, got {range:?}")));
        };
        cfg.lag_min = lo;
        cfg.lag_max = hi;
    }
    cfg.validate().map_err(|e| CliError::Config(format!("correlator: {e}")))?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn csv_sink(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>, CliError> {
    let w: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(w))
}

fn csv_err(e: impl fmt::Display) -> CliError {
    CliError::Data(format!("csv: {e}"))
}

pub fn simulate(run: &RunArgs, out: &Path) -> Result<(), CliError> {
    let cfg = load_run_config(run)?;
    let acq = qicorr::analysis::acquire(&cfg, Default::default())?;
    let file = TimestampFile::from_streams(&[&acq.signal, &acq.reference])
        .map_err(|e| CliError::Data(e.to_string()))?;
    let mut w = create(out)?;
    file.write_to(&mut w).map_err(|e| io_err(out, e))?;
    w.flush().map_err(|e| io_err(out, e))?;
    println!("duration_s: {}", cfg.duration);
    println!("tick_ps: {}", file.tick_ps);
    println!("signal (channel {SIGNAL_CHANNEL}): {} clicks, {:.1}/s", acq.signal.len(), acq.signal.rate());
    println!(
        "reference (channel {REFERENCE_CHANNEL}): {} clicks, {:.1}/s",
        acq.reference.len(),
        acq.reference.rate()
    );
    Ok(())
}

pub fn g2(file: &Path, grid: &GridArgs, duration_s: Option<f64>, out: Option<&Path>) -> Result<(), CliError> {
    let bytes = std::fs::read(file).map_err(|e| io_err(file, e))?;
    let ts = TimestampFile::parse(&bytes).map_err(|e| io_err(file, e))?;
    let grid = apply_grid(ExperimentConfig::default().correlator, grid)?;
    let tick = ts.tick_ps as f64 * 1e-12;
    let duration_ticks = match duration_s {
        Some(t) if t.is_finite() && t > 0.0 => Some((t / tick).ceil() as u64),
        Some(t) => return Err(CliError::Config(format!("--duration-s must be positive, got {t}"))),
        None => None,
    };
    let missing = |c: u8| CliError::Data(format!("{}: no channel {c}", file.display()));
    let signal = ts.stream(SIGNAL_CHANNEL, duration_ticks).ok_or_else(|| missing(SIGNAL_CHANNEL))?;
    let reference = ts.stream(REFERENCE_CHANNEL, duration_ticks).ok_or_else(|| missing(REFERENCE_CHANNEL))?;
    if let (Some(d), Some(&last)) = (duration_ticks, ts.channels.iter().filter_map(|c| c.last()).max()) {
        if last >= d {
            return Err(CliError::Data(format!("timestamp {last} lies beyond --duration-s")));
        }
    }
    let corr = correlogram(&signal, &reference, &grid).map_err(|e| CliError::Data(e.to_string()))?;
    let est = corr.g2::<f64>().map_err(|e| CliError::Data(e.to_string()))?;
    let scan = corr.scan_peak().map_err(|e| CliError::Data(e.to_string()))?;

    if let Some(path) = out {
        let mut w = csv_sink(Some(path))?;
        w.write_record(["lag_ticks", "lag_ns", "counts", "g2"]).map_err(csv_err)?;
        for (k, lag) in corr.lags().enumerate() {
            w.write_record([
                lag.to_string(),
                (lag as f64 * tick * 1e9).to_string(),
                corr.counts[k].to_string(),
                est.g2[k].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(csv_err)?;
    }
    let peak_counts = corr.counts[est.peak_bin];
    println!("duration_s: {}", corr.duration);
    println!("singles_signal_per_s: {}", corr.singles_signal as f64 / corr.duration);
    println!("singles_reference_per_s: {}", corr.singles_reference as f64 / corr.duration);
    println!("bin_width_ticks: {}", grid.bin_width);
    println!("peak_lag_ticks: {}", est.peak_lag);
    println!("peak_lag_ns: {}", est.peak_lag as f64 * tick * 1e9);
    println!("peak_counts: {peak_counts}");
    println!("coincidences_per_s: {}", peak_counts as f64 / corr.duration);
    println!("peak_g2: {}", est.peak_g2);
    println!("snr: {}", qicorr::correlator::snr(est.peak_g2));
    println!("significant: {}", scan.significant);
    Ok(())
}

fn write_sweep(result: &SweepResult, out: Option<&Path>) -> Result<(), CliError> {
    let noise = result.kind == SweepKind::Noise;
    let mut w = csv_sink(out)?;
    let mut header = vec!["x", "counts", "g2", "snr", "sigma"];
    if noise {
        header.extend(["accidentals", "signal_rate", "correction"]);
    }
    w.write_record(&header).map_err(csv_err)?;
    for p in &result.points {
        let mut row = vec![p.x.to_string(), p.counts.to_string(), p.g2.to_string(), p.snr.to_string(), p.sigma.to_string()];
        if noise {
            row.push(p.accidentals.map(|a| a.to_string()).unwrap_or_default());
            row.push(p.signal_rate.to_string());
            row.push(p.correction.map(|d| d.to_string()).unwrap_or_default());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn sweep(
    kind: SweepArg,
    run: &RunArgs,
    values: &[f64],
    grid: &GridArgs,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut base = load_run_config(run)?;
    base.correlator = apply_grid(base.correlator, grid)?;
    if values.is_empty() {
        return Err(CliError::Config("--values: at least one value needed".into()));
    }
    let (kind, configs): (SweepKind, Vec<(f64, ExperimentConfig)>) = match kind {
        SweepArg::Noise => {
            if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(CliError::Config(format!("--values: noise rate must be non-negative, got {bad}")));
            }
            let configs = values
                .iter()
                .map(|&rate| {
                    let mut c = base.clone();
                    c.noise.rate = rate;
                    (rate, c)
                })
                .collect();
            (SweepKind::Noise, configs)
        }
        SweepArg::Qwp => {
            if base.channel.arrangement != Arrangement::Tpc {
                return Err(CliError::Config("qwp sweeps need the tpc arrangement".into()));
            }
            if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
                return Err(CliError::Config(format!("--values: angle must be finite, got {bad}")));
            }
            let configs = values
                .iter()
                .map(|&deg| {
                    let mut c = base.clone();
                    c.channel.qwp_angle = deg.to_radians();
                    (deg.to_radians(), c)
                })
                .collect();
            (SweepKind::Qwp, configs)
        }
    };
    let result = sweep_configs(kind, configs, kind == SweepKind::Noise)?;
    for f in &result.failures {
        eprintln!("warning: point {} (x = {}) failed: {}", f.index, f.x, f.message);
    }
    write_sweep(&result, out)?;
    if out.is_some() {
        println!("points: {}", result.points.len());
        println!("peak_lag_ticks: {}", result.peak_lag);
    }
    Ok(())
}

struct SweepTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl SweepTable {
    fn read(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
        let headers = r.headers().map_err(|e| io_err(path, e))?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| io_err(path, e))?;
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("CSV has no {name:?} column")))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = row.get(idx).map(String::as_str).unwrap_or("");
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Data(format!("row {}: bad {name} value {cell:?}", i + 1)))
            })
            .collect()
    }
}

pub fn fit(
    model: FitArg,
    csv: &Path,
    config: Option<&Path>,
    dead_time_ns: f64,
    no_correction: bool,
) -> Result<(), CliError> {
    let table = SweepTable::read(csv)?;
    match model {
        FitArg::Sinusoid => {
            let x = table.column("x")?;
            let y = table.column("counts")?;
            let f = fit_sinusoid(&x, &y, None)?;
            println!("floor: {} +- {}", f.floor, f.floor_sigma);
            println!("amplitude: {} +- {}", f.amplitude, f.amplitude_sigma);
            match f.phase_sigma {
                Some(s) => println!("phase_rad: {} +- {}", f.phase, s),
                None => println!("phase_rad: undefined"),
            }
            println!("c_min: {}", f.c_min());
            println!("c_max: {}", f.c_max());
            match f.visibility() {
                Ok(v) => println!("visibility: {v}"),
                Err(e) => println!("visibility: undefined ({e})"),
            }
            println!("chi2: {}", f.chi2);
            println!("dof: {}", f.dof);
            println!("residual_norm: {}", f.residual_norm);
        }
        FitArg::Visibility => {
            let detector = match config {
                Some(p) => ExperimentConfig::load(p)?.signal_detector,
                None => {
                    if !(dead_time_ns.is_finite() && dead_time_ns >= 0.0) {
                        return Err(CliError::Config(format!("--dead-time-ns must be non-negative, got {dead_time_ns}")));
                    }
                    DetectorModel { dead_time: dead_time_ns * 1e-9, ..Default::default() }
                }
            };
            let c_max = table.column("counts")?;
            let c_min = table.column("accidentals")?;
            let rate = table.column("signal_rate")?;
            let obs: Vec<VisibilityObservation<f64>> = (0..c_max.len())
                .map(|i| VisibilityObservation { c_max: c_max[i], c_min: c_min[i], observed_rate: rate[i] })
                .collect();
            let mode = if no_correction { CorrectionMode::Ignore } else { CorrectionMode::Apply };
            let f = fit_visibility_curve(&obs, 0.0, &detector, mode)?;
            println!("c_corr: {} +- {}", f.c_corr, f.c_corr_sigma);
            println!("chi2: {}", f.chi2);
            println!("dof: {}", f.dof);
            let norm = f.points.iter().map(|p| (p.v - p.model).powi(2)).sum::<f64>().sqrt();
            println!("residual_norm: {norm}");
            for p in &f.points {
                println!("point: c_ac={} d={} v={} +- {} model={}", p.c_ac, p.d, p.v, p.sigma, p.model);
            }
        }
    }
    Ok(())
}

pub fn saturation(
    config: Option<&Path>,
    rates: &[f64],
    duration_s: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let detector = match config {
        Some(p) => ExperimentConfig::load(p)?.signal_detector,
        None => DetectorModel::default(),
    };
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(CliError::Config(format!("--duration-s must be positive, got {duration_s}")));
    }
    let reports =
        saturation_curve(&detector, rates, duration_s, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let mut w = csv_sink(out)?;
    w.write_record(["incident_rate", "observed_rate", "expected_rate", "correction"]).map_err(csv_err)?;
    for r in reports {
        w.write_record([
            r.incident_rate.to_string(),
            r.observed_rate.to_string(),
            detector.observed_rate(r.incident_rate).to_string(),
            r.correction.factor().map(|d| d.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}
