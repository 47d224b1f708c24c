//! Photon-pair source, background noise and the optical return channel.
//!
//! Pair emission is a homogeneous Poisson process. Each pair yields a
//! reference photon at the emission time (plus a fixed reference delay) and a
//! signal photon delayed by the extra signal path and a Gaussian jitter. The
//! return channel thins the signal arm with a single composed survival
//! probability per photon.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

use crate::rng::{self, SimRng};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Extra path travelled by the signal arm in the reference setup, metres.
pub const DEFAULT_SIGNAL_EXTRA_PATH: f64 = 1.2;

/// Reflectance of the anodized aluminium target.
pub const DEFAULT_OBJECT_REFLECTANCE: f64 = 0.13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PairgenError {
    #[error("{field} must be finite and non-negative, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("{field} must be a probability in [0, 1], got {value}")]
    Probability { field: &'static str, value: f64 },
    #[error("duration must be finite and positive, got {0}")]
    Duration(f64),
    #[error("polarization angle must be finite, got {0}")]
    Angle(f64),
}

fn non_negative(field: &'static str, value: f64) -> Result<(), PairgenError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(PairgenError::Negative { field, value })
    }
}

fn probability(field: &'static str, value: f64) -> Result<(), PairgenError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(PairgenError::Probability { field, value })
    }
}

fn check_duration(duration: f64) -> Result<(), PairgenError> {
    if duration.is_finite() && duration > 0.0 {
        Ok(())
    } else {
        Err(PairgenError::Duration(duration))
    }
}

/// Polarization state of a photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Polarization {
    H,
    V,
    Rhc,
    Lhc,
    /// Linear polarization at the given angle, radians in `[0, π)`.
    Linear(f64),
}

impl Polarization {
    /// Linear state at `angle`, folded into `[0, π)`.
    pub fn linear(angle: f64) -> Result<Self, PairgenError> {
        if !angle.is_finite() {
            return Err(PairgenError::Angle(angle));
        }
        let folded = angle.rem_euclid(PI);
        // rem_euclid can round up to exactly π
        Ok(Polarization::Linear(if folded >= PI { 0.0 } else { folded }))
    }

    /// Orientation of a linear state; `None` for circular states.
    pub fn linear_angle(self) -> Option<f64> {
        match self {
            Polarization::H => Some(0.0),
            Polarization::V => Some(FRAC_PI_2),
            Polarization::Linear(a) => Some(a),
            Polarization::Rhc | Polarization::Lhc => None,
        }
    }
}

/// Which arm a photon travels in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Signal,
    Reference,
}

/// Where a photon came from. Detectors cannot see this; it is kept for
/// bookkeeping and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Pair,
    Noise,
}

/// A photon arriving at the detection plane of one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawEvent {
    /// Arrival time, seconds.
    pub time: f64,
    pub arm: Arm,
    pub origin: Origin,
    /// `None` for unpolarized light.
    pub polarization: Option<Polarization>,
}

/// Photon-pair source parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    /// Pairs per second.
    pub pair_rate: f64,
    /// Standard deviation of the signal-arm timing spread, seconds.
    pub pair_jitter_sigma: f64,
    /// Extra signal path relative to the reference arm, metres.
    pub signal_extra_path: f64,
    /// Fixed delay added to the reference arm, seconds.
    pub reference_delay: f64,
    pub signal_polarization: Polarization,
    pub reference_polarization: Polarization,
    pub seed: u64,
}

impl Default for SourceModel {
    fn default() -> Self {
        Self {
            pair_rate: 1.0e6,
            pair_jitter_sigma: 0.0,
            signal_extra_path: DEFAULT_SIGNAL_EXTRA_PATH,
            reference_delay: 0.0,
            signal_polarization: Polarization::H,
            reference_polarization: Polarization::H,
            seed: 0,
        }
    }
}

impl SourceModel {
    pub fn validate(&self) -> Result<(), PairgenError> {
        non_negative("pair_rate", self.pair_rate)?;
        non_negative("pair_jitter_sigma", self.pair_jitter_sigma)?;
        non_negative("signal_extra_path", self.signal_extra_path)?;
        non_negative("reference_delay", self.reference_delay)?;
        for pol in [self.signal_polarization, self.reference_polarization] {
            if let Polarization::Linear(a) = pol {
                if !(a.is_finite() && (0.0..PI).contains(&a)) {
                    return Err(PairgenError::Angle(a));
                }
            }
        }
        Ok(())
    }

    /// Propagation delay of the signal arm's extra path, seconds.
    pub fn signal_path_delay(&self) -> f64 {
        self.signal_extra_path / SPEED_OF_LIGHT
    }

    /// Expected lag of signal relative to reference, seconds.
    pub fn expected_lag(&self) -> f64 {
        self.signal_path_delay() - self.reference_delay
    }

    /// Streams pairs in emission order without materialising them.
    ///
    /// Reference times come out sorted; signal times are sorted only when
    /// `pair_jitter_sigma == 0`.
    pub fn emitter(&self, duration: f64) -> Result<PairEmitter, PairgenError> {
        self.validate()?;
        check_duration(duration)?;
        PairEmitter::new(self, duration, rng::substream(self.seed, rng::stream::PAIRS))
    }
}

/// One emitted pair: arrival times at the two detection planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmittedPair {
    pub reference: f64,
    pub signal: f64,
}

/// Iterator over the pairs of a seeded emission run.
#[derive(Debug, Clone)]
pub struct PairEmitter {
    rng: SimRng,
    gap: Option<Exp<f64>>,
    jitter: Option<Normal<f64>>,
    time: f64,
    end: f64,
    signal_delay: f64,
    reference_delay: f64,
}

impl PairEmitter {
    /// Emitter drawing from an explicit generator.
    pub fn new(model: &SourceModel, duration: f64, rng: SimRng) -> Result<Self, PairgenError> {
        model.validate()?;
        check_duration(duration)?;
        let gap = (model.pair_rate > 0.0)
            .then(|| Exp::new(model.pair_rate).expect("positive finite rate"));
        let jitter = (model.pair_jitter_sigma > 0.0)
            .then(|| Normal::new(0.0, model.pair_jitter_sigma).expect("positive finite sigma"));
        Ok(Self {
            rng,
            gap,
            jitter,
            time: 0.0,
            end: duration,
            signal_delay: model.signal_path_delay(),
            reference_delay: model.reference_delay,
        })
    }
}

impl Iterator for PairEmitter {
    type Item = EmittedPair;

    fn next(&mut self) -> Option<EmittedPair> {
        let gap = self.gap.as_ref()?;
        self.time += gap.sample(&mut self.rng);
        if self.time >= self.end {
            self.gap = None;
            return None;
        }
        let jitter = match &self.jitter {
            Some(n) => n.sample(&mut self.rng),
            None => 0.0,
        };
        Some(EmittedPair {
            reference: self.time + self.reference_delay,
            signal: self.time + self.signal_delay + jitter,
        })
    }
}

fn sort_by_time(events: &mut [RawEvent]) {
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
}

/// Generates a pair run of length `duration` seconds.
///
/// Returns `(signal, reference)` arrival streams, each sorted by time.
pub fn generate_pairs(
    model: &SourceModel,
    duration: f64,
) -> Result<(Vec<RawEvent>, Vec<RawEvent>), PairgenError> {
    let mut signal = Vec::new();
    let mut reference = Vec::new();
    for pair in model.emitter(duration)? {
        reference.push(RawEvent {
            time: pair.reference,
            arm: Arm::Reference,
            origin: Origin::Pair,
            polarization: Some(model.reference_polarization),
        });
        signal.push(RawEvent {
            time: pair.signal,
            arm: Arm::Signal,
            origin: Origin::Pair,
            polarization: Some(model.signal_polarization),
        });
    }
    if model.pair_jitter_sigma > 0.0 {
        sort_by_time(&mut signal);
    }
    Ok((signal, reference))
}

/// Background light injected into the signal arm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseModel {
    /// Photons per second at the injection point.
    pub rate: f64,
    /// `false` for unpolarized thermal light; polarized noise is horizontal.
    pub polarized: bool,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), PairgenError> {
        non_negative("noise rate", self.rate)
    }

    pub fn polarization(&self) -> Option<Polarization> {
        self.polarized.then_some(Polarization::H)
    }
}

/// Poisson arrival times at `rate` over `[0, duration)`.
pub fn poisson_times<R: Rng + ?Sized>(rate: f64, duration: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity((rate * duration * 1.01) as usize + 16);
    if rate <= 0.0 {
        return out;
    }
    let gap = Exp::new(rate).expect("positive finite rate");
    let mut t = gap.sample(rng);
    while t < duration {
        out.push(t);
        t += gap.sample(rng);
    }
    out
}

/// Generates signal-arm noise photons over `[0, duration)` from `seed`.
pub fn generate_noise(
    model: &NoiseModel,
    duration: f64,
    seed: u64,
) -> Result<Vec<RawEvent>, PairgenError> {
    let mut rng = rng::substream(seed, rng::stream::NOISE);
    generate_noise_with(model, duration, &mut rng)
}

/// As [`generate_noise`], drawing from an explicit generator.
pub fn generate_noise_with<R: Rng + ?Sized>(
    model: &NoiseModel,
    duration: f64,
    rng: &mut R,
) -> Result<Vec<RawEvent>, PairgenError> {
    model.validate()?;
    check_duration(duration)?;
    let polarization = model.polarization();
    Ok(poisson_times(model.rate, duration, rng)
        .into_iter()
        .map(|time| RawEvent {
            time,
            arm: Arm::Signal,
            origin: Origin::Noise,
            polarization,
        })
        .collect())
}

/// Detection arrangement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Arrangement {
    /// Time and polarization correlations: QWP + PBS in the signal arm.
    #[default]
    Tpc,
    /// Time correlations only: 50:50 beam splitter in the signal arm.
    Tc,
}

/// Split ratio of the TC beam splitter.
pub const BEAM_SPLITTER_RATIO: f64 = 0.5;

/// Optical path from the source, off the target, back to the signal detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub arrangement: Arrangement,
    pub object_reflectance: f64,
    pub collection_efficiency: f64,
    /// Quarter-wave plate fast-axis angle, radians.
    pub qwp_angle: f64,
    /// Fraction of scattered pair photons whose polarization is randomised.
    pub depolarization_fraction: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            arrangement: Arrangement::Tpc,
            object_reflectance: DEFAULT_OBJECT_REFLECTANCE,
            collection_efficiency: 1.0,
            qwp_angle: 0.0,
            depolarization_fraction: 0.0,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), PairgenError> {
        probability("object_reflectance", self.object_reflectance)?;
        probability("collection_efficiency", self.collection_efficiency)?;
        probability("depolarization_fraction", self.depolarization_fraction)?;
        if !self.qwp_angle.is_finite() {
            return Err(PairgenError::Angle(self.qwp_angle));
        }
        Ok(())
    }

    /// Transmission of the double-pass QWP + PBS analyser for a polarized
    /// photon: `cos²(2(θ − α))` for linear light at `α`, one half for
    /// circular light.
    pub fn analyser_transmission(&self, polarization: Polarization) -> f64 {
        match polarization.linear_angle() {
            Some(alpha) => (2.0 * (self.qwp_angle - alpha)).cos().powi(2),
            None => 0.5,
        }
    }

    /// Probability that a returning pair photon passes the polarization
    /// optics (TPC) or the beam splitter (TC).
    pub fn pair_polarization_factor(&self, polarization: Option<Polarization>) -> f64 {
        match self.arrangement {
            Arrangement::Tpc => {
                let f = self.depolarization_fraction;
                let kept = polarization.map_or(0.5, |p| self.analyser_transmission(p));
                (1.0 - f) * kept + f * 0.5
            }
            // out through the splitter, back off it towards the detector
            Arrangement::Tc => BEAM_SPLITTER_RATIO * BEAM_SPLITTER_RATIO,
        }
    }

    /// Composed survival probability of a pair photon in the signal arm.
    pub fn pair_survival(&self, polarization: Option<Polarization>) -> f64 {
        self.object_reflectance
            * self.collection_efficiency
            * self.pair_polarization_factor(polarization)
    }

    /// Survival probability of a noise photon injected in front of the
    /// analyser (TPC) or the beam splitter (TC).
    pub fn noise_survival(&self, polarization: Option<Polarization>) -> f64 {
        match (self.arrangement, polarization) {
            (Arrangement::Tpc, Some(p)) => self.analyser_transmission(p),
            (Arrangement::Tpc, None) => 0.5,
            (Arrangement::Tc, _) => BEAM_SPLITTER_RATIO,
        }
    }

    pub fn survival(&self, event: &RawEvent) -> f64 {
        match event.origin {
            Origin::Pair => self.pair_survival(event.polarization),
            Origin::Noise => self.noise_survival(event.polarization),
        }
    }

    /// Source intensity scale that gives the TC arrangement the same detected
    /// pair rate as the TPC arrangement at this channel's QWP angle.
    pub fn tc_intensity_match(&self, signal_polarization: Polarization) -> f64 {
        let tpc = Self { arrangement: Arrangement::Tpc, ..*self };
        let tc = Self { arrangement: Arrangement::Tc, ..*self };
        tpc.pair_polarization_factor(Some(signal_polarization))
            / tc.pair_polarization_factor(Some(signal_polarization))
    }
}

/// Keeps each signal-arm photon with its composed survival probability.
///
/// Reference-arm events pass through untouched. Order is preserved.
pub fn apply_channel<R: Rng + ?Sized>(
    events: &[RawEvent],
    channel: &ChannelModel,
    rng: &mut R,
) -> Vec<RawEvent> {
    events
        .iter()
        .filter(|e| e.arm == Arm::Reference || rng.random_bool(channel.survival(e)))
        .copied()
        .collect()
}
