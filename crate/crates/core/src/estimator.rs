//! M-estimation of a multivariate location by iterative re-weighting.
//!
//! The estimate `T` solves `sum_i psi(|X_i - T|) (X_i - T) / |X_i - T| = 0`.
//! Writing `w_i = psi(r_i) / r_i` turns this into `T = sum w_i X_i / sum w_i`,
//! which is iterated from the coordinate-wise median until the step length
//! falls below `tol * (1 + |theta|)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{distance, median_in_place, norm, Matrix};
use crate::score::ScoreFamily;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Init {
    CoordinateMedian,
    Provided(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub score: ScoreFamily,
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
}

impl EstimatorConfig {
    pub const DEFAULT_TOL: f64 = 1e-10;
    pub const DEFAULT_MAX_ITER: usize = 200;

    pub fn new(score: ScoreFamily) -> Self {
        Self {
            score,
            tol: Self::DEFAULT_TOL,
            max_iter: Self::DEFAULT_MAX_ITER,
            init: Init::CoordinateMedian,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    fn validate(&self, d: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if let Init::Provided(v) = &self.init {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("initial point must be finite"));
            }
        }
        Ok(())
    }
}

/// Output of [`irls_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub estimate: Vec<f64>,
    /// Number of re-weighting updates applied to reach `estimate`.
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the averaged score vector at `estimate`.
    pub residual: f64,
    /// Final weights `psi(r_i) / r_i` at `estimate`.
    pub weights: Vec<f64>,
    /// Step lengths `|theta_{m+1} - theta_m|`.
    pub trace: Vec<f64>,
}

/// Per-coordinate sample median.
pub fn coordinatewise_median(x: &Matrix) -> Result<Vec<f64>> {
    if x.nrows() == 0 {
        return Err(Error::EmptyInput("coordinate-wise median of zero rows"));
    }
    let mut column = Vec::with_capacity(x.nrows());
    Ok((0..x.ncols())
        .map(|j| {
            column.clear();
            column.extend(x.rows().map(|r| r[j]));
            median_in_place(&mut column)
        })
        .collect())
}

/// What one re-weighting update produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Sum of the weights at the input point.
    pub weight_sum: f64,
    /// `|theta_next - theta|`.
    pub step: f64,
}

/// One re-weighting update: writes `sum w_i X_i / sum w_i` into `next`, with
/// the weights evaluated at `theta`. When `weights` is given it receives the
/// per-sample weights.
pub fn reweight_step(
    x: &Matrix,
    theta: &[f64],
    score: &ScoreFamily,
    next: &mut [f64],
    mut weights: Option<&mut [f64]>,
) -> StepStats {
    next.iter_mut().for_each(|v| *v = 0.0);
    let mut weight_sum = 0.0;
    for (i, row) in x.rows().enumerate() {
        let w = score.weight(distance(row, theta));
        if let Some(ws) = weights.as_deref_mut() {
            ws[i] = w;
        }
        weight_sum += w;
        for (acc, v) in next.iter_mut().zip(row) {
            *acc += w * v;
        }
    }
    let inv = 1.0 / weight_sum;
    next.iter_mut().for_each(|v| *v *= inv);
    StepStats {
        weight_sum,
        step: distance(next, theta),
    }
}

/// Solves the score equation by iterative re-weighting.
///
/// Stops after the first update `theta_m -> theta_{m+1}` that moves by at
/// most `tol * (1 + |theta_m|)` and returns `theta_{m+1}`, with the weights
/// and residual evaluated there. Hitting `max_iter` updates is reported
/// through `converged = false`.
pub fn irls_estimate(x: &Matrix, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("estimate of zero rows"));
    }
    x.check_finite()?;
    cfg.validate(x.ncols())?;

    let mut theta = match &cfg.init {
        Init::CoordinateMedian => coordinatewise_median(x)?,
        Init::Provided(v) => v.clone(),
    };
    let mut next = vec![0.0; x.ncols()];
    let mut weights = vec![0.0; n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let stats = reweight_step(x, &theta, &cfg.score, &mut next, None);
        let threshold = cfg.tol * (1.0 + norm(&theta));
        trace.push(stats.step);
        std::mem::swap(&mut theta, &mut next);
        iterations += 1;
        if stats.step <= threshold {
            converged = true;
            break;
        }
    }
    // one more weighting pass for the telemetry at the returned point
    let stats = reweight_step(x, &theta, &cfg.score, &mut next, Some(&mut weights));
    Ok(EstimateResult {
        estimate: theta,
        iterations,
        converged,
        residual: stats.weight_sum / n as f64 * stats.step,
        weights,
        trace,
    })
}

/// `|(1/n) sum_i psi(|X_i - theta|) (X_i - theta) / |X_i - theta||`; samples
/// equal to `theta` contribute nothing.
pub fn fixed_point_residual(x: &Matrix, theta: &[f64], score: &ScoreFamily) -> f64 {
    norm(&mean_score_vector(x, theta, score))
}

pub(crate) fn mean_score_vector(x: &Matrix, theta: &[f64], score: &ScoreFamily) -> Vec<f64> {
    let mut acc = vec![0.0; theta.len()];
    for row in x.rows() {
        let r = distance(row, theta);
        if r > 0.0 {
            let s = score.psi_unchecked(r) / r;
            for ((a, v), t) in acc.iter_mut().zip(row).zip(theta) {
                *a += s * (v - t);
            }
        }
    }
    let n = x.nrows().max(1) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// `J_n(theta) = (1/n) sum_i rho(|X_i - theta|)`, the objective the
/// re-weighting scheme descends.
pub fn objective(x: &Matrix, theta: &[f64], score: &ScoreFamily) -> f64 {
    let total: f64 = x
        .rows()
        .map(|row| score.rho_unchecked(distance(row, theta)))
        .sum();
    total / x.nrows().max(1) as f64
}

/// Location `T(P)` of a discrete law on the real line: the root of
/// `g(t) = sum_j p_j sign(x_j - t) psi(|x_j - t|)`.
///
/// `g` is nonincreasing, positive below the smallest atom's right and
/// negative above the largest, so bisection on `[min x, max x]` converges to
/// the unique root.
pub fn population_location_1d(atoms: &[(f64, f64)], score: &ScoreFamily) -> Result<f64> {
    if atoms.is_empty() {
        return Err(Error::EmptyInput("population location of an empty law"));
    }
    let mut total = 0.0;
    for &(x, p) in atoms {
        if !x.is_finite() {
            return Err(Error::invalid("atom locations must be finite"));
        }
        if !(p > 0.0) {
            return Err(Error::invalid(format!("atom probability must be positive, got {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("atom probabilities sum to {total}, not 1")));
    }
    if atoms.len() == 1 {
        return Ok(atoms[0].0);
    }

    let g = |t: f64| -> f64 {
        atoms
            .iter()
            .map(|&(x, p)| {
                let r = x - t;
                p * r.signum() * score.psi_unchecked(r.abs())
            })
            .sum()
    };
    let lo = atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
    let hi = atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    // g is non-increasing; a bounded score can make it vanish on a whole
    // interval, in which case the centre of that interval is returned
    let left = bisect(lo, hi, |t| g(t) > 0.0);
    let right = bisect(lo, hi, |t| g(t) >= 0.0);
    Ok(0.5 * (left + right))
}

/// Boundary of `{t : above(t)}` for a predicate that holds on a prefix of `[lo, hi]`.
fn bisect(mut lo: f64, mut hi: f64, above: impl Fn(f64) -> bool) -> f64 {
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
