//! Simulation and analysis of quantum-illumination style photon-pair
//! correlation measurements: pair generation, detector and time-tagger
//! models, cross-correlation, and the visibility and QWP analyses.

pub mod analysis;
pub mod config;
pub mod correlator;
pub mod detector;
pub mod fit;
pub mod num;
pub mod pairgen;
pub mod rng;
pub mod tsfile;

pub use analysis::{AnalysisError, CorrectionMode, SweepKind, SweepPoint, SweepResult};
pub use config::{ConfigError, ExperimentConfig};
pub use correlator::{Correlogram, CorrelogramConfig, CorrelatorError, DelayScan, G2Estimate};
pub use detector::{DetectorError, DetectorModel, TimestampStream};
pub use fit::FitError;
pub use num::{Real, Scalar};
pub use pairgen::{Arrangement, ChannelModel, NoiseModel, Polarization, SourceModel};
pub use tsfile::{TimestampFile, TsFileError};

pub type G2EstimateF64 = correlator::G2Estimate<f64>;
pub type QwpFitF64 = analysis::QwpFit<f64>;
pub type QwpFitF32 = analysis::QwpFit<f32>;
pub type VisibilityPointF64 = analysis::VisibilityPoint<f64>;
pub type VisibilityFitF64 = analysis::VisibilityFit<f64>;
