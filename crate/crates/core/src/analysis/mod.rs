//! Experiment orchestration and model fitting: noise and QWP sweeps,
//! visibility, and the TC/TPC comparison.

mod fitting;
mod pipeline;
mod sweep;

pub use fitting::{
    fit_sinusoid, fit_visibility_curve, CorrectionMode, QwpFit, VisibilityFit, VisibilityObservation,
};
pub use pipeline::{
    acquire, configured_pair_coincidences, expected_rates, Acquisition, ExpectedRates, RunOptions,
    REFERENCE_CHANNEL, SIGNAL_CHANNEL,
};
pub use sweep::{
    compare_arrangements, run_point, sweep_configs, sweep_noise, sweep_qwp, ArrangementComparison, SweepFailure,
    SweepKind, SweepPoint, SweepResult,
};

use thiserror::Error;

use crate::config::ConfigError;
use crate::correlator::CorrelatorError;
use crate::detector::DetectorError;
use crate::fit::FitError;
use crate::num::{Real, Scalar};
use crate::pairgen::PairgenError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pairgen(#[from] PairgenError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Correlator(#[from] CorrelatorError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("visibility undefined: {0}")]
    Visibility(&'static str),
    #[error("invalid sweep: {0}")]
    Sweep(String),
}

/// Contrast of a QWP sweep, `(C_max − C_min)/(C_max + C_min)`.
pub fn visibility<T: Scalar>(c_max: T, c_min: T) -> Result<T, AnalysisError> {
    if c_min < T::zero() {
        return Err(AnalysisError::Visibility("negative C_min"));
    }
    if c_max < c_min {
        return Err(AnalysisError::Visibility("C_max below C_min"));
    }
    if c_max <= T::zero() {
        return Err(AnalysisError::Visibility("C_max is zero"));
    }
    Ok((c_max.clone() - c_min.clone()) / (c_max + c_min))
}

/// Visibility predicted from correlated and accidental coincidences with the
/// detector correction factor: `C_corr / (C_corr + 2·C_ac·d)`.
pub fn visibility_model<T: Scalar>(c_corr: T, c_ac: T, d: T) -> Result<T, AnalysisError> {
    if c_corr < T::zero() || c_ac < T::zero() || d < T::zero() {
        return Err(AnalysisError::Visibility("negative input"));
    }
    let two = T::one() + T::one();
    let denominator = c_corr.clone() + two * c_ac * d;
    if denominator <= T::zero() {
        return Err(AnalysisError::Visibility("zero denominator"));
    }
    Ok(c_corr / denominator)
}

/// Standard error of [`visibility`] from Poisson errors on both counts.
/// Zero counts are given unit variance.
pub fn visibility_sigma<T: Real>(c_max: T, c_min: T) -> T {
    let sum = c_max + c_min;
    let sum2 = sum * sum;
    let var_max = c_max.max(T::one());
    let var_min = c_min.max(T::one());
    let two = T::lit(2.0);
    let d_max = two * c_min / sum2;
    let d_min = two * c_max / sum2;
    (d_max * d_max * var_max + d_min * d_min * var_min).sqrt()
}

/// One point of the visibility curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityPoint<T> {
    /// Measured visibility.
    pub v: T,
    pub sigma: T,
    pub c_corr: T,
    pub c_ac: T,
    pub d: T,
    /// Model visibility at the fitted `C_corr`.
    pub model: T,
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn visibility_examples() {
        assert_eq!(visibility(10.0, 0.0).unwrap(), 1.0);
        assert_eq!(visibility(7.0, 7.0).unwrap(), 0.0);
        assert_eq!(visibility(150.0, 50.0).unwrap(), 0.5);
        assert!(visibility(0.0, 0.0).is_err());
        assert!(visibility(1.0, 2.0).is_err());
    }

    #[test]
    fn visibility_model_examples() {
        assert_eq!(visibility_model(100.0, 0.0, 1.3).unwrap(), 1.0);
        assert_eq!(visibility_model(100.0, 50.0, 1.0).unwrap(), 0.5);
        let v = visibility_model(Ratio::new(100i64, 1), Ratio::from(50), Ratio::from(2)).unwrap();
        assert_eq!(v, Ratio::new(1, 3));
        assert!(visibility_model(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn sigma_no_background() {
        // C_min = 0 treated as unit variance: sigma = 2/C_max
        assert!((visibility_sigma(100.0_f64, 0.0) - 0.02).abs() < 1e-15);
    }
}
