//! Data-driven choice of the score scale `beta`.
//!
//! The scale is picked on a log-spaced grid over `(0, MAD * sqrt(n)]` by
//! minimising
//!
//! ```text
//! V(beta) / n  +  C_psi * MAD^4 / beta^2  +  (budget * beta)^2
//! ```
//!
//! where `V(beta)` is the mean squared score at the fitted estimate and
//! `MAD` the median distance to the geometric median. The three terms bound
//! the variance, the squared bias and the corruption bias respectively.

use serde::Serialize;

use crate::comparators::{geometric_median, DEFAULT_GM_MAX_ITER, DEFAULT_GM_TOL};
use crate::error::{Error, Result};
use crate::estimator::{irls_estimate, EstimateResult, EstimatorConfig, Init};
use crate::matrix::{distance, median_in_place, Matrix};
use crate::score::{ScoreFamily, ScoreKind};

/// Ratio between the largest and smallest grid scale.
const GRID_SPAN: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct TuningOptions {
    pub grid_size: usize,
    pub corruption_budget: f64,
    /// Exponent for the polynomial family; ignored otherwise.
    pub p: u32,
    pub tol: f64,
    pub max_iter: usize,
    pub gm_tol: f64,
    pub warm_start: bool,
}

impl Default for TuningOptions {
    fn default() -> Self {
        Self {
            grid_size: 40,
            corruption_budget: 0.05,
            p: 5,
            tol: EstimatorConfig::DEFAULT_TOL,
            max_iter: 500,
            gm_tol: DEFAULT_GM_TOL,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub beta: f64,
    /// `None` when the inner solve did not converge; such points are skipped.
    pub criterion: Option<f64>,
    pub v_hat: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSelection {
    pub beta_hat: f64,
    pub grid: Vec<GridPoint>,
    pub mad: f64,
    pub c_psi: f64,
    /// The converged fit at `beta_hat`.
    #[serde(skip)]
    pub fit: EstimateResult,
}

impl BetaSelection {
    pub fn criterion_at_optimum(&self) -> f64 {
        self.grid
            .iter()
            .find(|g| g.beta == self.beta_hat)
            .and_then(|g| g.criterion)
            .unwrap_or(f64::NAN)
    }
}

/// Median distance from the samples to their geometric median.
pub fn mad(x: &Matrix, gm_tol: f64) -> Result<f64> {
    let gm = geometric_median(x, gm_tol, DEFAULT_GM_MAX_ITER)?;
    let mut dists: Vec<f64> = x.rows().map(|r| distance(r, &gm.point)).collect();
    Ok(median_in_place(&mut dists))
}

/// `grid_size` log-spaced scales from `top / 1e3` to `top`, strictly increasing.
pub fn beta_grid(top: f64, grid_size: usize) -> Vec<f64> {
    let lo = (top / GRID_SPAN).ln();
    let hi = top.ln();
    let last = (grid_size - 1) as f64;
    (0..grid_size)
        .map(|k| {
            if k + 1 == grid_size {
                top
            } else {
                (lo + (hi - lo) * k as f64 / last).exp()
            }
        })
        .collect()
}

pub fn criterion(v_hat: f64, n: usize, c_psi: f64, mad: f64, beta: f64, budget: f64) -> f64 {
    v_hat / n as f64 + c_psi * mad.powi(4) / (beta * beta) + (budget * beta).powi(2)
}

/// Grid search for `beta`. Ties go to the smaller scale.
pub fn select_beta(x: &Matrix, kind: ScoreKind, opts: &TuningOptions) -> Result<BetaSelection> {
    let n = x.nrows();
    if opts.grid_size < 2 {
        return Err(Error::invalid("grid_size must be at least 2"));
    }
    if n < 2 {
        return Err(Error::invalid("beta selection needs at least two rows"));
    }
    if !(opts.corruption_budget >= 0.0) {
        return Err(Error::invalid("corruption budget must be nonnegative"));
    }
    x.check_finite()?;
    let mad = mad(x, opts.gm_tol)?;
    if !(mad > 0.0) {
        return Err(Error::DegenerateMad);
    }
    let c_psi = kind.bias_constant();
    let betas = beta_grid(mad * (n as f64).sqrt(), opts.grid_size);

    let fit_at = |beta: f64, init: Init| -> Result<EstimateResult> {
        let score = ScoreFamily::new(kind, beta, opts.p)?;
        let cfg = EstimatorConfig::new(score)
            .with_tol(opts.tol)
            .with_max_iter(opts.max_iter)
            .with_init(init);
        irls_estimate(x, &cfg)
    };
    let evaluate = |beta: f64, fit: &EstimateResult| -> Result<GridPoint> {
        let score = ScoreFamily::new(kind, beta, opts.p)?;
        if !fit.converged {
            return Ok(GridPoint {
                beta,
                criterion: None,
                v_hat: None,
                iterations: fit.iterations,
            });
        }
        let v_hat = x
            .rows()
            .map(|r| score.psi_unchecked(distance(r, &fit.estimate)).powi(2))
            .sum::<f64>()
            / n as f64;
        Ok(GridPoint {
            beta,
            criterion: Some(criterion(v_hat, n, c_psi, mad, beta, opts.corruption_budget)),
            v_hat: Some(v_hat),
            iterations: fit.iterations,
        })
    };

    let mut grid = Vec::with_capacity(betas.len());
    let mut best: Option<(usize, f64, EstimateResult)> = None;
    let consider = |k: usize, point: &GridPoint, fit: EstimateResult, best: &mut Option<(usize, f64, EstimateResult)>| {
        if let Some(c) = point.criterion {
            // strict comparison keeps the smaller beta on ties
            if best.as_ref().is_none_or(|(_, b, _)| c < *b) {
                *best = Some((k, c, fit));
            }
        }
    };

    if opts.warm_start {
        let mut init = Init::CoordinateMedian;
        for (k, &beta) in betas.iter().enumerate() {
            let fit = fit_at(beta, init.clone())?;
            let point = evaluate(beta, &fit)?;
            if fit.converged {
                init = Init::Provided(fit.estimate.clone());
            }
            consider(k, &point, fit, &mut best);
            grid.push(point);
        }
    } else {
        for (k, fit) in cold_fits(&betas, &fit_at)?.into_iter().enumerate() {
            let point = evaluate(betas[k], &fit)?;
            consider(k, &point, fit, &mut best);
            grid.push(point);
        }
    }

    let (k, _, fit) = best.ok_or(Error::NoValidGridPoint)?;
    Ok(BetaSelection {
        beta_hat: betas[k],
        grid,
        mad,
        c_psi,
        fit,
    })
}

#[cfg(feature = "parallel")]
fn cold_fits<F>(betas: &[f64], fit_at: &F) -> Result<Vec<EstimateResult>>
where
    F: Fn(f64, Init) -> Result<EstimateResult> + Sync,
{
    use rayon::prelude::*;
    betas.par_iter().map(|&b| fit_at(b, Init::CoordinateMedian)).collect()
}

#[cfg(not(feature = "parallel"))]
fn cold_fits<F>(betas: &[f64], fit_at: &F) -> Result<Vec<EstimateResult>>
where
    F: Fn(f64, Init) -> Result<EstimateResult>,
{
    betas.iter().map(|&b| fit_at(b, Init::CoordinateMedian)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn pareto(n: usize, d: usize, alpha: f64, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d)
            .map(|_| {
                let u: f64 = rng.random();
                (1.0 - u).powf(-1.0 / alpha)
            })
            .collect();
        Matrix::new(n, d, data).unwrap()
    }

    #[test]
    fn mad_examples() {
        assert_eq!(mad(&Matrix::from_column(&[0.0, 0.0, 0.0]), 1e-10).unwrap(), 0.0);
        assert_eq!(mad(&Matrix::from_column(&[-1.0, 0.0, 1.0]), 1e-10).unwrap(), 1.0);
    }

    /// Brute-force quantile of |Z|: the population value solves
    /// 2 Phi(m) - 1 = 1/2, found here by bisection on a high-resolution
    /// numerical integral of the normal density.
    fn normal_abs_median() -> f64 {
        let cdf = |z: f64| {
            let cells = 200_000;
            let h = z / cells as f64;
            let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
            (0..cells).map(|k| pdf((k as f64 + 0.5) * h)).sum::<f64>() * h
        };
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * cdf(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn gaussian_mad_matches_normal_quartile() {
        let target = normal_abs_median();
        assert!((target - 0.6745).abs() < 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let m = mad(&Matrix::from_column(&z), 1e-10).unwrap();
        assert!((m - target).abs() < 0.05, "{m}");
    }

    #[test]
    fn bias_constants() {
        assert_eq!(ScoreKind::Huber.bias_constant(), 1.0);
        assert_eq!(ScoreKind::Catoni.bias_constant(), 5.0 / 32.0);
        assert_eq!(ScoreKind::Polynomial.bias_constant(), 1.0 / 16.0);
    }

    #[test]
    fn grid_is_log_spaced_and_increasing() {
        let g = beta_grid(50.0, 40);
        assert_eq!(g.len(), 40);
        assert!((g[0] - 0.05).abs() < 1e-12);
        assert_eq!(g[39], 50.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let ratios: Vec<f64> = g.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-9));
    }

    #[test]
    fn degenerate_data_is_rejected() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [5.0, 5.0]]).unwrap();
        assert!(matches!(
            select_beta(&x, ScoreKind::Huber, &TuningOptions::default()),
            Err(Error::DegenerateMad)
        ));
        let opts = TuningOptions {
            grid_size: 1,
            ..TuningOptions::default()
        };
        assert!(select_beta(&pareto(20, 2, 3.0, 0), ScoreKind::Huber, &opts).is_err());
    }

    #[test]
    fn argmin_over_symmetric_bounded_data() {
        // uniform on a centred box: symmetric, bounded, MAD close to one
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<[f64; 2]> = (0..100)
            .map(|_| [rng.random_range(-1.4..1.4), rng.random_range(-1.4..1.4)])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let sel = select_beta(&x, ScoreKind::Huber, &TuningOptions::default()).unwrap();
        assert!((sel.mad - 1.0).abs() < 0.25, "{}", sel.mad);
        let best = sel.criterion_at_optimum();
        for g in &sel.grid {
            if let Some(c) = g.criterion {
                assert!(best <= c);
            }
        }
        assert!(sel.beta_hat > 0.0 && sel.beta_hat <= sel.mad * 10.0 + 1e-12);
    }

    #[test]
    fn interior_minimum_on_heavy_tailed_data() {
        for seed in 0..3 {
            let x = pareto(1000, 100, 3.0, seed);
            let sel = select_beta(&x, ScoreKind::Huber, &TuningOptions::default()).unwrap();
            let valid: Vec<(f64, f64)> = sel.grid.iter().filter_map(|g| g.criterion.map(|c| (g.beta, c))).collect();
            assert!(valid.len() >= 2);
            let first = valid.first().unwrap();
            let last = valid.last().unwrap();
            assert!(sel.beta_hat > first.0 && sel.beta_hat < last.0, "seed {seed}: {}", sel.beta_hat);
            assert!(valid.iter().all(|(_, c)| c.is_finite()));
        }
    }

    #[test]
    fn reproducible_and_warm_start_matches_cold() {
        let x = pareto(300, 10, 2.5, 9);
        for kind in [ScoreKind::Huber, ScoreKind::Catoni, ScoreKind::Polynomial] {
            let opts = TuningOptions::default();
            let a = select_beta(&x, kind, &opts).unwrap();
            let b = select_beta(&x, kind, &opts).unwrap();
            assert_eq!(a.beta_hat.to_bits(), b.beta_hat.to_bits());
            let cold = select_beta(
                &x,
                kind,
                &TuningOptions {
                    warm_start: false,
                    max_iter: 5000,
                    ..opts
                },
            )
            .unwrap();
            assert_eq!(a.beta_hat, cold.beta_hat, "{kind:?}");
            for (w, c) in a.grid.iter().zip(&cold.grid) {
                if let (Some(cw), Some(cc)) = (w.criterion, c.criterion) {
                    assert!((cw - cc).abs() <= 1e-8 * cc.abs().max(1.0), "{kind:?} beta {}", w.beta);
                }
            }
        }
    }

    #[test]
    fn larger_budget_never_raises_beta() {
        let x = pareto(400, 5, 2.5, 12);
        let mut prev = f64::INFINITY;
        for budget in [0.0, 0.01, 0.05, 0.1, 0.5] {
            let sel = select_beta(
                &x,
                ScoreKind::Catoni,
                &TuningOptions {
                    corruption_budget: budget,
                    ..TuningOptions::default()
                },
            )
            .unwrap();
            assert!(sel.beta_hat <= prev, "budget {budget}");
            prev = sel.beta_hat;
        }
    }
}
