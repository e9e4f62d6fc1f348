//! Plug-in variance proxies, the influence statistic and the unicity check.

use serde::Serialize;

use crate::comparators::empirical_mean;
use crate::error::{Error, Result};
use crate::estimator::mean_score_vector;
use crate::matrix::{distance, norm, Matrix};
use crate::score::ScoreFamily;

pub const POWER_TOL: f64 = 1e-9;
pub const POWER_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceEstimates {
    /// `(1/n) sum psi(r_i)^2`.
    pub v_hat_trace: f64,
    /// Largest eigenvalue of `(1/n) sum psi(r_i)^2 u_i u_i^T`.
    pub v_hat_op: f64,
    /// Trace of the empirical covariance (1/n normalisation).
    pub trace_sigma_hat: f64,
    /// Largest eigenvalue of the empirical covariance.
    pub opnorm_sigma_hat: f64,
}

/// Norm of the averaged score vectors at `theta`.
pub fn influence_statistic(x: &Matrix, theta: &[f64], score: &ScoreFamily) -> f64 {
    norm(&mean_score_vector(x, theta, score))
}

pub fn variance_estimates(x: &Matrix, theta: &[f64], score: &ScoreFamily) -> Result<VarianceEstimates> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid("variance estimates need at least two rows"));
    }
    x.check_finite()?;
    if theta.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: theta.len(),
        });
    }
    let d = x.ncols();
    let inv_n = 1.0 / n as f64;

    let mut score_moment = vec![0.0; d * d];
    let mut v_trace = 0.0;
    let mut u = vec![0.0; d];
    for row in x.rows() {
        let r = distance(row, theta);
        if r == 0.0 {
            continue;
        }
        let psi = score.psi_unchecked(r);
        v_trace += psi * psi;
        let scale = psi / r;
        u.iter_mut().zip(row.iter().zip(theta)).for_each(|(ui, (v, t))| *ui = scale * (v - t));
        add_outer(&mut score_moment, &u);
    }
    v_trace *= inv_n;
    score_moment.iter_mut().for_each(|v| *v *= inv_n);

    let mean = empirical_mean(x)?;
    let mut cov = vec![0.0; d * d];
    let mut trace = 0.0;
    for row in x.rows() {
        u.iter_mut().zip(row.iter().zip(&mean)).for_each(|(ui, (v, m))| *ui = v - m);
        trace += u.iter().map(|v| v * v).sum::<f64>();
        add_outer(&mut cov, &u);
    }
    cov.iter_mut().for_each(|v| *v *= inv_n);

    Ok(VarianceEstimates {
        v_hat_trace: v_trace,
        v_hat_op: largest_eigenvalue(&score_moment, d, POWER_TOL, POWER_MAX_ITER)?,
        trace_sigma_hat: trace * inv_n,
        opnorm_sigma_hat: largest_eigenvalue(&cov, d, POWER_TOL, POWER_MAX_ITER)?,
    })
}

fn add_outer(acc: &mut [f64], u: &[f64]) {
    let d = u.len();
    for (a, &ua) in u.iter().enumerate() {
        if ua == 0.0 {
            continue;
        }
        let row = &mut acc[a * d..(a + 1) * d];
        row.iter_mut().zip(u).for_each(|(m, &ub)| *m += ua * ub);
    }
}

/// Largest dimension for which the iteration runs on `m^16` rather than `m`.
const SQUARING_MAX_DIM: usize = 256;
const SQUARINGS: usize = 4;

/// Power iteration for the top eigenvalue of a symmetric positive
/// semi-definite `d x d` matrix stored row-major.
///
/// Starts from the normalised all-ones vector and stops when the Rayleigh
/// quotient of `m` changes by at most `tol` relative to its size. For
/// `d <= 256` the vector is propagated by `m^16` (four trace-normalised
/// squarings), so each iteration does the work of sixteen plain steps;
/// clustered top eigenvalues otherwise need thousands of iterations.
pub fn largest_eigenvalue(m: &[f64], d: usize, tol: f64, max_iter: usize) -> Result<f64> {
    debug_assert_eq!(m.len(), d * d);
    if d == 0 {
        return Ok(0.0);
    }
    if d == 1 {
        return Ok(m[0]);
    }
    let propagator = if d <= SQUARING_MAX_DIM {
        let mut p = m.to_vec();
        for _ in 0..SQUARINGS {
            p = square_normalised(&p, d);
        }
        p
    } else {
        m.to_vec()
    };
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut w = vec![0.0; d];
    let mut lambda = rayleigh(m, &v, &mut w);
    for _ in 0..max_iter {
        mat_vec(&propagator, &v, &mut w);
        let len = norm(&w);
        if len == 0.0 || !len.is_finite() {
            // the start vector lies in the kernel; fall back on the diagonal
            return Ok((0..d).map(|i| m[i * d + i]).fold(0.0, f64::max).max(0.0));
        }
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / len);
        let next = rayleigh(m, &v, &mut w);
        if (next - lambda).abs() <= tol * next.abs() {
            return Ok(next);
        }
        lambda = next;
    }
    Err(Error::PowerIteration { iterations: max_iter })
}

fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = m[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn rayleigh(m: &[f64], v: &[f64], scratch: &mut [f64]) -> f64 {
    mat_vec(m, v, scratch);
    scratch.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `p^2 / trace(p^2)`; the scaling keeps repeated squaring finite.
fn square_normalised(p: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        let row = &mut out[i * d..(i + 1) * d];
        for k in 0..d {
            let a = p[i * d + k];
            if a == 0.0 {
                continue;
            }
            row.iter_mut().zip(&p[k * d..(k + 1) * d]).for_each(|(o, b)| *o += a * b);
        }
    }
    let trace: f64 = (0..d).map(|i| out[i * d + i]).sum();
    if trace > 0.0 && trace.is_finite() {
        out.iter_mut().for_each(|v| *v /= trace);
    }
    out
}

/// Both sides of the plug-in unicity condition
/// `mean rho(|X_i - Xbar|) < min(rho(beta/3), psi(beta/2)^2 / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnicityCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rho_third: f64,
    pub psi_half_sq_half: f64,
}

impl UnicityCheck {
    pub fn rhs(&self) -> f64 {
        self.rho_third.min(self.psi_half_sq_half)
    }

    pub fn margin(&self) -> f64 {
        self.rhs() - self.lhs
    }
}

/// Plug-in evaluation of the unicity condition. Advisory: the population
/// condition is sufficient, not necessary.
pub fn check_unicity_assumption(x: &Matrix, score: &ScoreFamily) -> Result<UnicityCheck> {
    let mean = empirical_mean(x)?;
    let lhs = x
        .rows()
        .map(|r| score.rho_unchecked(distance(r, &mean)))
        .sum::<f64>()
        / x.nrows() as f64;
    let beta = score.beta();
    let rho_third = score.rho_unchecked(beta / 3.0);
    let half = score.psi_unchecked(beta / 2.0);
    let psi_half_sq_half = 0.5 * half * half;
    Ok(UnicityCheck {
        holds: lhs < rho_third.min(psi_half_sq_half),
        lhs,
        rho_third,
        psi_half_sq_half,
    })
}
