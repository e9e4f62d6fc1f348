//! Baseline location estimators: the empirical mean, the geometric median
//! (Weiszfeld's algorithm) and the geometric median of block means.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::coordinatewise_median;
use crate::matrix::{distance, norm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComparatorKind {
    EmpiricalMean,
    GeometricMedian,
    GeometricMedianOfMeans { k: usize },
}

/// Default Weiszfeld step tolerance.
pub const DEFAULT_GM_TOL: f64 = 1e-8;
pub const DEFAULT_GM_MAX_ITER: usize = 1000;

/// Distances below this count as "on a data point".
const ANCHOR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianResult {
    pub point: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn empirical_mean(x: &Matrix) -> Result<Vec<f64>> {
    if x.nrows() == 0 {
        return Err(Error::EmptyInput("mean of zero rows"));
    }
    let mut acc = vec![0.0; x.ncols()];
    for row in x.rows() {
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    let n = x.nrows() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Geometric median by Weiszfeld iteration with the Vardi-Zhang correction
/// at data points.
///
/// Starts from the coordinate-wise median and stops once a step is no longer
/// than `tol`; the iterate at which that happened is returned. When the
/// iterate sits on a data point of multiplicity `eta` and the pull of the
/// other points has norm `R <= eta`, that point is optimal and the iteration
/// stops there.
pub fn geometric_median(x: &Matrix, tol: f64, max_iter: usize) -> Result<MedianResult> {
    if x.nrows() == 0 {
        return Err(Error::EmptyInput("geometric median of zero rows"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {tol}")));
    }
    let d = x.ncols();
    let mut theta = coordinatewise_median(x)?;
    let mut weighted = vec![0.0; d];
    let mut pull = vec![0.0; d];

    for m in 0..=max_iter {
        weighted.iter_mut().for_each(|v| *v = 0.0);
        pull.iter_mut().for_each(|v| *v = 0.0);
        let mut inv_sum = 0.0;
        let mut multiplicity = 0usize;
        for row in x.rows() {
            let r = distance(row, &theta);
            if r <= ANCHOR_EPS {
                multiplicity += 1;
                continue;
            }
            let w = 1.0 / r;
            inv_sum += w;
            for ((a, p), (v, t)) in weighted.iter_mut().zip(pull.iter_mut()).zip(row.iter().zip(&theta)) {
                *a += w * v;
                *p += w * (v - t);
            }
        }
        if inv_sum == 0.0 {
            // every sample coincides with theta
            return Ok(MedianResult {
                point: theta,
                iterations: m,
                converged: true,
            });
        }
        let pull_norm = norm(&pull);
        let eta = multiplicity as f64;
        if multiplicity > 0 && pull_norm <= eta {
            return Ok(MedianResult {
                point: theta,
                iterations: m,
                converged: true,
            });
        }
        // Vardi-Zhang: blend the Weiszfeld map with the current point when
        // theta is an anchor; reduces to plain Weiszfeld when eta = 0.
        let keep = if multiplicity > 0 { eta / pull_norm } else { 0.0 };
        let mut step_sq = 0.0;
        let next: Vec<f64> = weighted
            .iter()
            .zip(&theta)
            .map(|(a, t)| {
                let v = (1.0 - keep) * (a / inv_sum) + keep * t;
                step_sq += (v - t) * (v - t);
                v
            })
            .collect();
        let step = step_sq.sqrt();
        if step <= tol {
            return Ok(MedianResult {
                point: theta,
                iterations: m,
                converged: true,
            });
        }
        if m == max_iter {
            return Ok(MedianResult {
                point: next,
                iterations: m + 1,
                converged: false,
            });
        }
        theta = next;
    }
    unreachable!("loop always returns on its last pass")
}

/// Sizes of `k` contiguous blocks covering `n` rows: `n / k` each, with the
/// remainder handed out one row at a time from the first block.
pub fn block_sizes(n: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let base = n / k;
    let extra = n % k;
    Ok((0..k).map(|b| base + usize::from(b < extra)).collect())
}

/// Geometric median of the means of `k` contiguous row blocks.
pub fn geometric_median_of_means(x: &Matrix, k: usize, tol: f64, max_iter: usize) -> Result<MedianResult> {
    let sizes = block_sizes(x.nrows(), k)?;
    let d = x.ncols();
    let mut means = Matrix::zeros(k, d);
    let mut start = 0;
    for (b, &size) in sizes.iter().enumerate() {
        let out = means.row_mut(b);
        for i in start..start + size {
            out.iter_mut().zip(x.row(i)).for_each(|(a, v)| *a += v);
        }
        out.iter_mut().for_each(|a| *a /= size as f64);
        start += size;
    }
    geometric_median(&means, tol, max_iter)
}
