//! QWP sinusoid and visibility-curve fits.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use super::{visibility, visibility_model, visibility_sigma, AnalysisError, VisibilityPoint};
use crate::detector::{correction_factor, DetectorModel};
use crate::fit::{solve, FitError, LeastSquares, LevenbergMarquardt, Solution};
use crate::num::Real;

/// Fitted QWP sweep, `C(θ) = floor + amplitude·cos²(2θ − phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QwpFit<T> {
    /// Unconstrained floor estimate; may dip below zero within its error.
    pub floor: T,
    pub amplitude: T,
    /// Radians, in `(−π/2, π/2]`.
    pub phase: T,
    pub floor_sigma: T,
    pub amplitude_sigma: T,
    /// `None` when the amplitude vanishes and the phase is undefined.
    pub phase_sigma: Option<T>,
    /// Weighted sum of squared residuals.
    pub chi2: T,
    /// Euclidean norm of the unweighted residuals.
    pub residual_norm: T,
    pub dof: usize,
}

impl<T: Real> QwpFit<T> {
    /// Coincidences with only background present.
    pub fn c_min(&self) -> T {
        self.floor.max(T::zero())
    }

    /// Coincidences at the analyser maximum.
    pub fn c_max(&self) -> T {
        (self.floor + self.amplitude).max(self.c_min())
    }

    pub fn visibility(&self) -> Result<T, AnalysisError> {
        visibility(self.c_max(), self.c_min())
    }

    pub fn model(&self, theta: T) -> T {
        sinusoid(self.floor, self.amplitude, self.phase, theta)
    }
}

fn sinusoid<T: Real>(floor: T, amplitude: T, phase: T, theta: T) -> T {
    let c = (T::lit(2.0) * theta - phase).cos();
    floor + amplitude * c * c
}

struct Sinusoid<'a, T> {
    theta: &'a [T],
    y: &'a [T],
    sigma: &'a [T],
    fixed_phase: Option<T>,
}

impl<T: Real> Sinusoid<'_, T> {
    fn unpack(&self, p: &[T]) -> (T, T, T) {
        (p[0], p[1], self.fixed_phase.unwrap_or_else(|| p[2]))
    }
}

impl<T: Real> LeastSquares<T> for Sinusoid<'_, T> {
    fn residuals(&self, p: &[T]) -> Vec<T> {
        let (f, a, phi) = self.unpack(p);
        self.theta
            .iter()
            .zip(self.y)
            .zip(self.sigma)
            .map(|((&t, &y), &s)| (y - sinusoid(f, a, phi, t)) / s)
            .collect()
    }

    fn jacobian(&self, p: &[T]) -> Vec<Vec<T>> {
        let (_, a, phi) = self.unpack(p);
        let two = T::lit(2.0);
        self.theta
            .iter()
            .zip(self.sigma)
            .map(|(&t, &s)| {
                let u = two * t - phi;
                let c = u.cos();
                let mut row = vec![-T::one() / s, -(c * c) / s];
                if self.fixed_phase.is_none() {
                    row.push(-(a * (two * u).sin()) / s);
                }
                row
            })
            .collect()
    }
}

fn poisson_sigma<T: Real>(counts: &[T]) -> Vec<T> {
    counts.iter().map(|&c| c.max(T::one()).sqrt()).collect()
}

/// Folds a phase into `(−π/2, π/2]`; the model has period π in the phase.
fn fold_phase<T: Real>(phi: T) -> T {
    let pi = T::lit(std::f64::consts::PI);
    let half = T::lit(FRAC_PI_2);
    let mut p = phi % pi;
    if p <= -half {
        p = p + pi;
    } else if p > half {
        p = p - pi;
    }
    p
}

/// Fits `floor + amplitude·cos²(2θ − phase)` to a QWP sweep.
///
/// `sigma` defaults to Poisson errors `√max(N, 1)`. The start point comes
/// from the exact linear solve in the `1, cos 4θ, sin 4θ` basis; damped least
/// squares then refines it. Needs at least four points spanning a
/// half-period (π/4).
pub fn fit_sinusoid<T: Real>(
    angles: &[T],
    counts: &[T],
    sigma: Option<&[T]>,
) -> Result<QwpFit<T>, AnalysisError> {
    let n = angles.len();
    if n < 4 {
        return Err(FitError::TooFewPoints { needed: 4, got: n }.into());
    }
    if counts.len() != n || sigma.is_some_and(|s| s.len() != n) {
        return Err(FitError::Degenerate("angle, count and sigma lengths differ".into()).into());
    }
    let sigma: Vec<T> = match sigma {
        Some(s) => s.to_vec(),
        None => poisson_sigma(counts),
    };
    for i in 0..n {
        if !(angles[i].is_finite() && counts[i].is_finite() && sigma[i].is_finite() && sigma[i] > T::zero()) {
            return Err(FitError::NonFinite(i).into());
        }
    }
    let lo = angles.iter().copied().fold(T::infinity(), T::min);
    let hi = angles.iter().copied().fold(T::neg_infinity(), T::max);
    if hi - lo < T::lit(FRAC_PI_4) * (T::one() - T::lit(1e-9)) {
        return Err(FitError::Degenerate("angles span less than a half-period".into()).into());
    }

    // weighted linear least squares in the harmonic basis
    let four = T::lit(4.0);
    let mut ata = vec![vec![T::zero(); 3]; 3];
    let mut atb = vec![T::zero(); 3];
    for i in 0..n {
        let w = T::one() / (sigma[i] * sigma[i]);
        let basis = [T::one(), (four * angles[i]).cos(), (four * angles[i]).sin()];
        for a in 0..3 {
            atb[a] = atb[a] + w * basis[a] * counts[i];
            for b in 0..3 {
                ata[a][b] = ata[a][b] + w * basis[a] * basis[b];
            }
        }
    }
    let lin = solve(&ata, &atb)
        .ok_or_else(|| FitError::Degenerate("angles do not resolve the harmonic".into()))?;
    let half_amp = (lin[1] * lin[1] + lin[2] * lin[2]).sqrt();
    let amplitude0 = T::lit(2.0) * half_amp;
    let phase0 = lin[2].atan2(lin[1]) / T::lit(2.0);
    let floor0 = lin[0] - half_amp;

    let scale = lin[0].abs() + half_amp + T::one();
    let lm = LevenbergMarquardt::<T>::default();
    let flat = amplitude0 <= scale * T::lit(1e-9);
    let (floor, amplitude, phase, sol) = if flat {
        let problem = Sinusoid { theta: angles, y: counts, sigma: &sigma, fixed_phase: Some(T::zero()) };
        let sol = lm.minimize(&problem, &[floor0, amplitude0])?;
        (sol.params[0], sol.params[1], T::zero(), sol)
    } else {
        let problem = Sinusoid { theta: angles, y: counts, sigma: &sigma, fixed_phase: None };
        let sol = lm.minimize(&problem, &[floor0, amplitude0, phase0])?;
        let (mut f, mut a, mut p) = (sol.params[0], sol.params[1], sol.params[2]);
        if a < T::zero() {
            f = f + a;
            a = -a;
            p = p + T::lit(FRAC_PI_2);
        }
        (f, a, fold_phase(p), sol)
    };

    // covariance at the normalised parameters
    let fixed_phase = if flat { Some(T::zero()) } else { None };
    let problem = Sinusoid { theta: angles, y: counts, sigma: &sigma, fixed_phase };
    let params: Vec<T> = if flat { vec![floor, amplitude] } else { vec![floor, amplitude, phase] };
    let cov = covariance(&problem, &params)
        .ok_or_else(|| FitError::Degenerate("singular covariance".into()))?;
    let sd = |i: usize| cov[i][i].max(T::zero()).sqrt();
    let residual_norm = angles
        .iter()
        .zip(counts)
        .map(|(&t, &y)| {
            let r = y - sinusoid(floor, amplitude, phase, t);
            r * r
        })
        .fold(T::zero(), |a, b| a + b)
        .sqrt();
    Ok(QwpFit {
        floor,
        amplitude,
        phase,
        floor_sigma: sd(0),
        amplitude_sigma: sd(1),
        phase_sigma: (!flat).then(|| sd(2)),
        chi2: sol.cost,
        residual_norm,
        dof: n.saturating_sub(params.len()),
    })
}

fn covariance<T: Real, P: LeastSquares<T>>(problem: &P, params: &[T]) -> Option<Vec<Vec<T>>> {
    let jac = problem.jacobian(params);
    let n = params.len();
    let mut jtj = vec![vec![T::zero(); n]; n];
    for row in &jac {
        for a in 0..n {
            for b in 0..n {
                jtj[a][b] = jtj[a][b] + row[a] * row[b];
            }
        }
    }
    crate::fit::invert(&jtj)
}

/// Whether the visibility fit applies the detector correction factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectionMode {
    #[default]
    Apply,
    /// Force `d = 1`.
    Ignore,
}

/// Measured inputs of one visibility point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityObservation<T> {
    /// Coincidences at the analyser maximum.
    pub c_max: T,
    /// Background-only coincidences (accidentals).
    pub c_min: T,
    /// Observed click rate AV at the signal detector, per second.
    pub observed_rate: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityFit<T> {
    pub c_corr: T,
    pub c_corr_sigma: T,
    pub points: Vec<VisibilityPoint<T>>,
    /// Weighted residuals `(V − model)/σ_V`.
    pub residuals: Vec<T>,
    pub chi2: T,
    pub dof: usize,
}

struct VisibilityCurve<T> {
    c_ac: Vec<T>,
    d: Vec<T>,
    v: Vec<T>,
    sigma: Vec<T>,
}

impl<T: Real> LeastSquares<T> for VisibilityCurve<T> {
    fn residuals(&self, p: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        (0..self.v.len())
            .map(|i| (self.v[i] - p[0] / (p[0] + two * self.c_ac[i] * self.d[i])) / self.sigma[i])
            .collect()
    }

    fn jacobian(&self, p: &[T]) -> Vec<Vec<T>> {
        let two = T::lit(2.0);
        (0..self.v.len())
            .map(|i| {
                let k = two * self.c_ac[i] * self.d[i];
                let den = p[0] + k;
                vec![-(k / (den * den)) / self.sigma[i]]
            })
            .collect()
    }
}

/// Fits `V = C_corr / (C_corr + 2·C_ac·d)` over a noise sweep for `C_corr`.
///
/// Each point's `d` comes from its observed signal rate and the detector's
/// dead time; `c_corr_guess` seeds the fit and is estimated from the data
/// when not positive.
pub fn fit_visibility_curve<T: Real>(
    observations: &[VisibilityObservation<T>],
    c_corr_guess: T,
    detector: &DetectorModel,
    mode: CorrectionMode,
) -> Result<VisibilityFit<T>, AnalysisError> {
    let n = observations.len();
    if n < 3 {
        return Err(FitError::TooFewPoints { needed: 3, got: n }.into());
    }
    let dead_time = T::lit(detector.dead_time);
    let mut curve = VisibilityCurve { c_ac: vec![], d: vec![], v: vec![], sigma: vec![] };
    for (i, o) in observations.iter().enumerate() {
        if !(o.c_max.is_finite() && o.c_min.is_finite() && o.observed_rate.is_finite()) {
            return Err(FitError::NonFinite(i).into());
        }
        let sum = o.c_max + o.c_min;
        if !(sum > T::zero()) || o.c_min < T::zero() {
            return Err(FitError::Degenerate(format!("point {i} has no coincidences")).into());
        }
        let d = match mode {
            CorrectionMode::Apply => correction_factor(o.observed_rate, dead_time)?,
            CorrectionMode::Ignore => T::one(),
        };
        curve.c_ac.push(o.c_min);
        curve.d.push(d);
        curve.v.push((o.c_max - o.c_min) / sum);
        curve.sigma.push(visibility_sigma(o.c_max.max(T::zero()), o.c_min));
    }
    if curve.c_ac.iter().all(|&c| c <= T::zero()) {
        return Err(FitError::Degenerate("no accidentals: C_corr is unconstrained".into()).into());
    }
    let start = if c_corr_guess > T::zero() {
        c_corr_guess
    } else {
        // invert the model at the point with the most accidentals
        let i = (0..n).max_by(|&a, &b| curve.c_ac[a].partial_cmp(&curve.c_ac[b]).unwrap()).unwrap();
        let v = curve.v[i].min(T::lit(0.999)).max(T::lit(1e-3));
        T::lit(2.0) * curve.c_ac[i] * curve.d[i] * v / (T::one() - v)
    };
    let sol: Solution<T> = LevenbergMarquardt::default().minimize(&curve, &[start])?;
    let c_corr = sol.params[0];
    let c_corr_sigma = sol
        .sigma(0)
        .ok_or_else(|| FitError::Degenerate("singular covariance".into()))?;
    let points = (0..n)
        .map(|i| {
            Ok(VisibilityPoint {
                v: curve.v[i],
                sigma: curve.sigma[i],
                c_corr,
                c_ac: curve.c_ac[i],
                d: curve.d[i],
                model: visibility_model(c_corr.max(T::zero()), curve.c_ac[i], curve.d[i])?,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok(VisibilityFit { c_corr, c_corr_sigma, points, residuals: sol.residuals, chi2: sol.cost, dof: n - 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, span: f64) -> Vec<f64> {
        (0..n).map(|i| span * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn exact_recovery_of_noiseless_data() {
        let theta = grid(19, PI / 2.0);
        let y: Vec<f64> = theta.iter().map(|&t| sinusoid(120.0, 900.0, 0.3, t)).collect();
        let fit = fit_sinusoid(&theta, &y, None).unwrap();
        assert!((fit.floor - 120.0).abs() < 1e-9 * 120.0);
        assert!((fit.amplitude - 900.0).abs() < 1e-9 * 900.0);
        assert!((fit.phase - 0.3).abs() < 1e-9);
        assert!(fit.residual_norm < 1e-6);
    }

    #[test]
    fn exact_recovery_f32() {
        let theta: Vec<f32> = (0..12).map(|i| i as f32 * 0.15).collect();
        let y: Vec<f32> = theta.iter().map(|&t| sinusoid(10.0f32, 50.0, -0.4, t)).collect();
        let fit = fit_sinusoid(&theta, &y, None).unwrap();
        assert!((fit.amplitude - 50.0).abs() < 1e-2);
        assert!((fit.phase + 0.4).abs() < 1e-3);
    }

    #[test]
    fn constant_data_has_no_amplitude() {
        let theta = grid(10, PI / 2.0);
        let y = vec![400.0; 10];
        let fit = fit_sinusoid(&theta, &y, None).unwrap();
        assert!(fit.amplitude.abs() < 1e-9);
        assert!(fit.phase_sigma.is_none());
        assert!(fit.visibility().unwrap().abs() < 1e-9);
    }

    #[test]
    fn rejects_short_or_narrow_sweeps() {
        assert!(fit_sinusoid(&[0.0, 0.1, 0.2], &[1.0, 2.0, 3.0], None).is_err());
        let narrow = grid(8, 0.5);
        let y: Vec<f64> = narrow.iter().map(|&t| sinusoid(0.0, 10.0, 0.0, t)).collect();
        assert!(fit_sinusoid(&narrow, &y, None).is_err());
        assert!(fit_sinusoid(&[0.0, 0.3, 0.6, f64::NAN], &[1.0; 4], None).is_err());
    }

    #[test]
    fn phase_is_folded() {
        let theta = grid(16, PI / 2.0);
        let y: Vec<f64> = theta.iter().map(|&t| sinusoid(5.0, 100.0, 1.4, t)).collect();
        let fit = fit_sinusoid(&theta, &y, None).unwrap();
        assert!(fit.phase > -FRAC_PI_2 && fit.phase <= FRAC_PI_2);
        for &t in &theta {
            assert!((fit.model(t) - sinusoid(5.0, 100.0, 1.4, t)).abs() < 1e-6);
        }
    }

    #[test]
    fn visibility_curve_recovers_synthetic_c_corr() {
        let det = DetectorModel::default();
        let obs: Vec<VisibilityObservation<f64>> = [1.0e5, 1.0e6, 4.0e6, 8.0e6]
            .iter()
            .zip([5.0, 50.0, 200.0, 400.0])
            .map(|(&rate, c_ac)| {
                let d = correction_factor(rate, det.dead_time).unwrap();
                // c_max chosen so (c_max − c_min)/(c_max + c_min) matches the model
                let v = visibility_model(1000.0, c_ac, d).unwrap();
                let c_min = c_ac;
                let c_max = c_min * (1.0 + v) / (1.0 - v);
                VisibilityObservation { c_max, c_min, observed_rate: rate }
            })
            .collect();
        let fit = fit_visibility_curve(&obs, 0.0, &det, CorrectionMode::Apply).unwrap();
        assert!((fit.c_corr - 1000.0).abs() < 1e-9 * 1000.0, "{}", fit.c_corr);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-6));
        let biased = fit_visibility_curve(&obs, 0.0, &det, CorrectionMode::Ignore).unwrap();
        assert!(biased.c_corr < fit.c_corr);
    }

    #[test]
    fn visibility_curve_needs_accidentals() {
        let det = DetectorModel::default();
        let obs = vec![VisibilityObservation { c_max: 10.0, c_min: 0.0, observed_rate: 1.0 }; 3];
        assert!(fit_visibility_curve(&obs, 1.0, &det, CorrectionMode::Apply).is_err());
        assert!(fit_visibility_curve(&obs[..2], 1.0, &det, CorrectionMode::Apply).is_err());
    }
}
