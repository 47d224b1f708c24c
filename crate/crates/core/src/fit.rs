//! Damped least squares (Levenberg–Marquardt) for small parameter vectors.
//!
//! Problems supply weighted residuals `r_i = (y_i − f_i(p)) / σ_i` and their
//! Jacobian; the solver minimises `Σ r_i²`. Parameter counts here are one to
//! three, so the normal equations are solved directly.

use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("fit did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("non-finite input at index {0}")]
    NonFinite(usize),
}

/// A weighted least-squares problem.
pub trait LeastSquares<T: Real> {
    fn residuals(&self, params: &[T]) -> Vec<T>;
    /// Row-major `m × n` Jacobian of the residuals.
    fn jacobian(&self, params: &[T]) -> Vec<Vec<T>>;
}

#[derive(Debug, Clone, Copy)]
pub struct LevenbergMarquardt<T> {
    pub max_iterations: usize,
    /// Relative decrease of the cost below which the fit is converged.
    pub tolerance: T,
    pub initial_damping: T,
}

impl<T: Real> Default for LevenbergMarquardt<T> {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: T::lit(1e-12).max(T::epsilon() * T::lit(16.0)),
            initial_damping: T::lit(1e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub params: Vec<T>,
    /// Inverse of `JᵀJ` at the optimum; `None` when singular.
    pub covariance: Option<Vec<Vec<T>>>,
    /// Final `Σ r_i²`.
    pub cost: T,
    pub residuals: Vec<T>,
    pub iterations: usize,
}

impl<T: Real> Solution<T> {
    /// Standard error of parameter `i`, if the covariance exists.
    pub fn sigma(&self, i: usize) -> Option<T> {
        self.covariance.as_ref().map(|c| c[i][i].max(T::zero()).sqrt())
    }
}

fn cost<T: Real>(r: &[T]) -> T {
    r.iter().fold(T::zero(), |acc, &x| acc + x * x)
}

fn normal_equations<T: Real>(jac: &[Vec<T>], r: &[T], n: usize) -> (Vec<Vec<T>>, Vec<T>) {
    let mut jtj = vec![vec![T::zero(); n]; n];
    let mut jtr = vec![T::zero(); n];
    for (row, &ri) in jac.iter().zip(r) {
        for a in 0..n {
            jtr[a] = jtr[a] + row[a] * ri;
            for b in a..n {
                jtj[a][b] = jtj[a][b] + row[a] * row[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            jtj[a][b] = jtj[b][a];
        }
    }
    (jtj, jtr)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve<T: Real>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    let mut m: Vec<Vec<T>> = a.iter().zip(b).map(|(row, &bi)| {
        let mut r = row.clone();
        r.push(bi);
        r
    }).collect();
    let scale = a.iter().flatten().fold(T::zero(), |s, &x| s.max(x.abs()));
    if !(scale > T::zero()) || !scale.is_finite() {
        return None;
    }
    let tiny = scale * T::epsilon() * T::lit(64.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[pivot][col].abs() <= tiny {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] = m[row][k] - f * m[col][k];
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = m[row][n];
        for k in row + 1..n {
            acc = acc - m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Inverse of a small symmetric matrix, column by column.
pub fn invert<T: Real>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = vec![T::zero(); n];
        e[i] = T::one();
        cols.push(solve(a, &e)?);
    }
    Some((0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect())
}

impl<T: Real> LevenbergMarquardt<T> {
    pub fn minimize<P: LeastSquares<T>>(&self, problem: &P, start: &[T]) -> Result<Solution<T>, FitError> {
        let n = start.len();
        let mut params = start.to_vec();
        let mut r = problem.residuals(&params);
        let mut c = cost(&r);
        if !c.is_finite() {
            return Err(FitError::Degenerate("non-finite cost at the starting point".into()));
        }
        let mut lambda = self.initial_damping;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < self.max_iterations {
            iterations += 1;
            let jac = problem.jacobian(&params);
            let (jtj, jtr) = normal_equations(&jac, &r, n);
            let max_diag = (0..n).fold(T::zero(), |m, i| m.max(jtj[i][i]));
            if !(max_diag > T::zero()) {
                return Err(FitError::Degenerate("Jacobian is zero".into()));
            }
            let grad = jtr.iter().fold(T::zero(), |m, &g| m.max(g.abs()));
            if grad <= self.tolerance * (c + T::epsilon()) {
                converged = true;
                break;
            }
            let mut improved = false;
            while lambda < T::lit(1e16) {
                let mut damped = jtj.clone();
                for i in 0..n {
                    let d = jtj[i][i].max(max_diag * T::lit(1e-12));
                    damped[i][i] = damped[i][i] + lambda * d;
                }
                let neg: Vec<T> = jtr.iter().map(|&g| -g).collect();
                let Some(step) = solve(&damped, &neg) else {
                    lambda = lambda * T::lit(10.0);
                    continue;
                };
                let trial: Vec<T> = params.iter().zip(&step).map(|(&p, &s)| p + s).collect();
                let tr = problem.residuals(&trial);
                let tc = cost(&tr);
                if tc.is_finite() && tc <= c {
                    let rel = (c - tc) / (c + T::epsilon());
                    let step_small = step
                        .iter()
                        .zip(&trial)
                        .all(|(&s, &p)| s.abs() <= self.tolerance * (p.abs() + self.tolerance));
                    params = trial;
                    r = tr;
                    c = tc;
                    lambda = (lambda / T::lit(10.0)).max(T::lit(1e-15));
                    improved = true;
                    if rel <= self.tolerance || step_small {
                        converged = true;
                    }
                    break;
                }
                lambda = lambda * T::lit(10.0);
            }
            if !improved {
                // no downhill step at any damping: already at a minimum
                converged = true;
            }
            if converged {
                break;
            }
        }
        if !converged {
            return Err(FitError::NoConvergence(iterations));
        }
        let jac = problem.jacobian(&params);
        let (jtj, _) = normal_equations(&jac, &r, n);
        Ok(Solution { covariance: invert(&jtj), params, cost: c, residuals: r, iterations })
    }
}
