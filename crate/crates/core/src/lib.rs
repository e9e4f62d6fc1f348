//! Robust M-estimation of a multivariate mean.
//!
//! The crate computes location M-estimators built on the Huber, Catoni and
//! Polynomial score functions by iterative re-weighting, picks the score
//! scale from the data, and ships the pieces needed to compare them against
//! classical baselines on heavy-tailed, adversarially corrupted samples:
//!
//! - [`score`]: the score families, their derivatives and antiderivatives.
//! - [`estimator`]: the re-weighting solver and a 1-D population oracle.
//! - [`diagnostics`]: variance proxies, influence statistic, unicity check.
//! - [`tuning`]: grid search for the score scale.
//! - [`comparators`]: empirical mean, geometric median, median of means.
//! - [`data`]: seeded Pareto / Student mixture generators and CSV I/O.
//! - [`bench`]: the Monte-Carlo harness and tail experiment.
//!
//! ```
//! use robustmean::{irls_estimate, EstimatorConfig, Matrix, ScoreFamily};
//!
//! let x = Matrix::from_column(&[-1.0, 0.0, 1.0, 50.0]);
//! let cfg = EstimatorConfig::new(ScoreFamily::huber(1.0).unwrap());
//! let fit = irls_estimate(&x, &cfg).unwrap();
//! assert!(fit.converged);
//! assert!(fit.estimate[0] < 1.0);
//! ```

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
#[cfg(feature = "cli")]
pub mod cli;
pub mod comparators;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod matrix;
pub mod score;
pub mod tuning;

pub use error::{Error, Result};
pub use estimator::{coordinatewise_median, fixed_point_residual, irls_estimate, EstimateResult, EstimatorConfig, Init};
pub use matrix::Matrix;
pub use score::{ScoreFamily, ScoreKind};
