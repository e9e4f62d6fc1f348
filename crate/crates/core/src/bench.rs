//! Monte-Carlo comparison harness and the tail-probability experiment.
//!
//! Records are written as CSV with the columns
//! `dataset_label,estimator_label,replicate,error,wall_time_s,iterations,converged,beta_used`,
//! a header row, and a final `# complete` line once every record is out. A
//! file without the trailer was interrupted.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::comparators::{
    empirical_mean, geometric_median, geometric_median_of_means, DEFAULT_GM_MAX_ITER, DEFAULT_GM_TOL,
};
use crate::data::{dataset_presets, derive_seed, format_float, generate, Dataset, DatasetSpec};
use crate::diagnostics::influence_statistic;
use crate::error::{Error, Result};
use crate::estimator::{irls_estimate, EstimatorConfig};
use crate::matrix::distance;
use crate::score::{ScoreFamily, ScoreKind};
use crate::tuning::{select_beta, TuningOptions};

pub const CSV_HEADER: &str = "dataset_label,estimator_label,replicate,error,wall_time_s,iterations,converged,beta_used";
pub const TRAILER: &str = "# complete";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BetaChoice {
    Fixed { value: f64 },
    Auto,
}

fn default_p() -> u32 {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EstimatorKind {
    MEstimator {
        score: ScoreKind,
        #[serde(default = "default_p")]
        p: u32,
        beta: BetaChoice,
    },
    EmpiricalMean,
    GeometricMedian,
    GeometricMedianOfMeans { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub label: String,
    #[serde(flatten)]
    pub kind: EstimatorKind,
}

impl EstimatorSpec {
    pub fn new(label: impl Into<String>, kind: EstimatorKind) -> Self {
        Self {
            label: label.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub datasets: Vec<DatasetSpec>,
    pub estimators: Vec<EstimatorSpec>,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// Fill the `wall_time_s` column. Off by default so that output files
    /// are byte-reproducible.
    #[serde(default)]
    pub record_timings: bool,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        check_labels(self.datasets.iter().map(|d| d.label.as_str()), "dataset")?;
        check_labels(self.estimators.iter().map(|e| e.label.as_str()), "estimator")?;
        for d in &self.datasets {
            d.validate()?;
        }
        for e in &self.estimators {
            match &e.kind {
                EstimatorKind::MEstimator { score, p, beta } => {
                    let b = match beta {
                        BetaChoice::Fixed { value } => *value,
                        BetaChoice::Auto => 1.0,
                    };
                    ScoreFamily::new(*score, b, *p)?;
                }
                EstimatorKind::GeometricMedianOfMeans { k } => {
                    if *k == 0 || self.datasets.iter().any(|d| *k > d.n) {
                        return Err(Error::invalid(format!("{}: block count {k} out of range", e.label)));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn check_labels<'a>(labels: impl Iterator<Item = &'a str>, what: &str) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if l.is_empty() || l.contains([',', '\n', '\r', '"']) {
            return Err(Error::invalid(format!("{what} label `{l}` must be non-empty without commas, quotes or newlines")));
        }
        if !seen.insert(l) {
            return Err(Error::invalid(format!("duplicate {what} label `{l}`")));
        }
    }
    Ok(())
}

/// The four presets against Huber, Catoni and Polynomial (p = 5) with tuned
/// scales, the geometric median and the geometric median of 9 block means.
pub fn figure_config(replicates: usize, master_seed: u64) -> BenchConfig {
    let m = |label: &str, score| EstimatorSpec::new(label, EstimatorKind::MEstimator { score, p: 5, beta: BetaChoice::Auto });
    BenchConfig {
        datasets: dataset_presets(),
        estimators: vec![
            m("huber", ScoreKind::Huber),
            m("catoni", ScoreKind::Catoni),
            m("poly", ScoreKind::Polynomial),
            EstimatorSpec::new("gmed", EstimatorKind::GeometricMedian),
            EstimatorSpec::new("gmom", EstimatorKind::GeometricMedianOfMeans { k: 9 }),
        ],
        replicates,
        master_seed,
        output_path: None,
        record_timings: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub dataset_label: String,
    pub estimator_label: String,
    pub replicate: usize,
    /// `|estimate - true mean|`; NaN when the estimator failed.
    pub error: f64,
    pub wall_time_s: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub beta_used: Option<f64>,
}

impl BenchRecord {
    pub fn failed(&self) -> bool {
        self.error.is_nan()
    }

    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.dataset_label,
            self.estimator_label,
            self.replicate,
            format_float(self.error),
            opt(self.wall_time_s),
            self.iterations,
            self.converged,
            opt(self.beta_used),
        )
    }
}

/// Seed for replicate `replicate` of dataset number `dataset`.
pub fn replicate_seed(master: u64, dataset: usize, replicate: usize) -> u64 {
    derive_seed(derive_seed(master, dataset as u64), replicate as u64)
}

/// Output of a single estimator call.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutput {
    pub estimate: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub beta_used: Option<f64>,
}

pub fn run_estimator(kind: &EstimatorKind, ds: &Dataset) -> Result<EstimatorOutput> {
    let x = &ds.x;
    Ok(match kind {
        EstimatorKind::MEstimator { score, p, beta } => match beta {
            BetaChoice::Fixed { value } => {
                let f = ScoreFamily::new(*score, *value, *p)?;
                let r = irls_estimate(x, &EstimatorConfig::new(f))?;
                EstimatorOutput {
                    estimate: r.estimate,
                    iterations: r.iterations,
                    converged: r.converged,
                    beta_used: Some(*value),
                }
            }
            BetaChoice::Auto => {
                let opts = TuningOptions {
                    p: *p,
                    ..TuningOptions::default()
                };
                let sel = select_beta(x, *score, &opts)?;
                EstimatorOutput {
                    estimate: sel.fit.estimate,
                    iterations: sel.fit.iterations,
                    converged: sel.fit.converged,
                    beta_used: Some(sel.beta_hat),
                }
            }
        },
        EstimatorKind::EmpiricalMean => EstimatorOutput {
            estimate: empirical_mean(x)?,
            iterations: 0,
            converged: true,
            beta_used: None,
        },
        EstimatorKind::GeometricMedian => {
            let r = geometric_median(x, DEFAULT_GM_TOL, DEFAULT_GM_MAX_ITER)?;
            EstimatorOutput {
                estimate: r.point,
                iterations: r.iterations,
                converged: r.converged,
                beta_used: None,
            }
        }
        EstimatorKind::GeometricMedianOfMeans { k } => {
            let r = geometric_median_of_means(x, *k, DEFAULT_GM_TOL, DEFAULT_GM_MAX_ITER)?;
            EstimatorOutput {
                estimate: r.point,
                iterations: r.iterations,
                converged: r.converged,
                beta_used: None,
            }
        }
    })
}

/// One replicate of one dataset against every estimator, in config order.
fn run_replicate(cfg: &BenchConfig, dataset: usize, replicate: usize) -> Result<Vec<BenchRecord>> {
    let spec = cfg.datasets[dataset].with_seed(replicate_seed(cfg.master_seed, dataset, replicate));
    let ds = generate(&spec)?;
    Ok(cfg
        .estimators
        .iter()
        .map(|e| {
            let start = Instant::now();
            let out = run_estimator(&e.kind, &ds);
            let elapsed = start.elapsed().as_secs_f64();
            let wall_time_s = cfg.record_timings.then_some(elapsed);
            match out {
                Ok(o) => BenchRecord {
                    dataset_label: spec.label.clone(),
                    estimator_label: e.label.clone(),
                    replicate,
                    error: distance(&o.estimate, &ds.true_mean),
                    wall_time_s,
                    iterations: o.iterations,
                    converged: o.converged,
                    beta_used: o.beta_used,
                },
                Err(_) => BenchRecord {
                    dataset_label: spec.label.clone(),
                    estimator_label: e.label.clone(),
                    replicate,
                    error: f64::NAN,
                    wall_time_s,
                    iterations: 0,
                    converged: false,
                    beta_used: None,
                },
            }
        })
        .collect())
}

#[cfg(feature = "parallel")]
fn run_replicates(cfg: &BenchConfig, dataset: usize, jobs: usize) -> Result<Vec<Vec<BenchRecord>>> {
    use rayon::prelude::*;
    let work = || {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, dataset, r))
            .collect::<Result<Vec<_>>>()
    };
    if jobs <= 1 {
        return (0..cfg.replicates).map(|r| run_replicate(cfg, dataset, r)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    pool.install(work)
}

#[cfg(not(feature = "parallel"))]
fn run_replicates(cfg: &BenchConfig, dataset: usize, _jobs: usize) -> Result<Vec<Vec<BenchRecord>>> {
    (0..cfg.replicates).map(|r| run_replicate(cfg, dataset, r)).collect()
}

/// Runs every (dataset, replicate, estimator) combination.
///
/// Records are ordered by dataset, then estimator, then replicate, following
/// the config order. When `sink` is given, the header is written first and
/// each dataset's records are written as soon as all its replicates are done;
/// the trailer follows the last record.
pub fn run_benchmark(cfg: &BenchConfig, jobs: usize, mut sink: Option<&mut dyn Write>) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    if let Some(w) = sink.as_deref_mut() {
        writeln!(w, "{CSV_HEADER}")?;
        w.flush()?;
    }
    let mut all = Vec::with_capacity(cfg.datasets.len() * cfg.estimators.len() * cfg.replicates);
    for dataset in 0..cfg.datasets.len() {
        let per_replicate = run_replicates(cfg, dataset, jobs)?;
        let mut block = Vec::with_capacity(cfg.estimators.len() * cfg.replicates);
        for e in 0..cfg.estimators.len() {
            for rep in &per_replicate {
                block.push(rep[e].clone());
            }
        }
        if let Some(w) = sink.as_deref_mut() {
            for r in &block {
                writeln!(w, "{}", r.to_csv_line())?;
            }
            w.flush()?;
        }
        all.extend(block);
    }
    if let Some(w) = sink {
        writeln!(w, "{TRAILER}")?;
        w.flush()?;
    }
    Ok(all)
}

/// Number of failed calls per estimator label, in first-seen order.
pub fn failure_counts(records: &[BenchRecord]) -> Vec<(String, usize, usize)> {
    let mut out: Vec<(String, usize, usize)> = Vec::new();
    for r in records {
        let slot = match out.iter_mut().position(|(l, _, _)| *l == r.estimator_label) {
            Some(k) => k,
            None => {
                out.push((r.estimator_label.clone(), 0, 0));
                out.len() - 1
            }
        };
        out[slot].1 += usize::from(r.failed());
        out[slot].2 += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub dataset_label: String,
    pub estimator_label: String,
    pub count: usize,
    pub failed: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
    pub max: f64,
}

/// Quantile with the midpoint convention: at position `h = (n - 1) q` of the
/// sorted sample, the average of the order statistics at `floor(h)` and
/// `ceil(h)`.
pub fn quantile_midpoint(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    0.5 * (sorted[h.floor() as usize] + sorted[h.ceil() as usize])
}

/// Per (dataset, estimator) error statistics over the successful records,
/// in first-seen order.
pub fn summarize(records: &[BenchRecord]) -> Result<Vec<Summary>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records to summarise"));
    }
    let mut groups: Vec<((String, String), Vec<f64>, usize)> = Vec::new();
    for r in records {
        let key = (r.dataset_label.clone(), r.estimator_label.clone());
        let slot = match groups.iter().position(|(k, _, _)| *k == key) {
            Some(k) => k,
            None => {
                groups.push((key, Vec::new(), 0));
                groups.len() - 1
            }
        };
        if r.failed() {
            groups[slot].2 += 1;
        } else {
            groups[slot].1.push(r.error);
        }
    }
    Ok(groups
        .into_iter()
        .map(|((dataset_label, estimator_label), mut errors, failed)| {
            errors.sort_by(f64::total_cmp);
            let (median, q25, q75, mean, max) = if errors.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    quantile_midpoint(&errors, 0.5),
                    quantile_midpoint(&errors, 0.25),
                    quantile_midpoint(&errors, 0.75),
                    errors.iter().sum::<f64>() / errors.len() as f64,
                    *errors.last().unwrap(),
                )
            };
            Summary {
                dataset_label,
                estimator_label,
                count: errors.len(),
                failed,
                median,
                q25,
                q75,
                mean,
                max,
            }
        })
        .collect())
}

pub const SUMMARY_HEADER: &str = "dataset_label,estimator_label,count,failed,median,q25,q75,mean,max";

pub fn summary_csv(summaries: &[Summary]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for m in summaries {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            m.dataset_label,
            m.estimator_label,
            m.count,
            m.failed,
            format_float(m.median),
            format_float(m.q25),
            format_float(m.q75),
            format_float(m.mean),
            format_float(m.max)
        ));
    }
    s
}

pub fn summary_table(summaries: &[Summary]) -> String {
    let dw = summaries.iter().map(|s| s.dataset_label.len()).max().unwrap_or(0).max(7);
    let ew = summaries.iter().map(|s| s.estimator_label.len()).max().unwrap_or(0).max(9);
    let mut out = format!(
        "{:<dw$}  {:<ew$}  {:>5}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}\n",
        "dataset", "estimator", "n", "median", "q25", "q75", "mean", "max"
    );
    for s in summaries {
        out.push_str(&format!(
            "{:<dw$}  {:<ew$}  {:>5}  {:>10.4}  {:>10.4}  {:>10.4}  {:>10.4}  {:>10.4}\n",
            s.dataset_label, s.estimator_label, s.count, s.median, s.q25, s.q75, s.mean, s.max
        ));
    }
    out
}

/// Where the tail experiment centres its deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reference {
    /// The analytic mean; exact for symmetric laws.
    TrueMean,
    /// The estimator evaluated on one large sample of size `n`.
    PlugIn { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailConfig {
    pub dist: DatasetSpec,
    pub score: ScoreFamily,
    pub replicates: usize,
    pub lambdas: Vec<f64>,
    pub reference: Reference,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRow {
    pub lambda: f64,
    /// Frequency of `|T(X) - theta| >= lambda`.
    pub t_hat_estimator: f64,
    /// Frequency of `influence(X, theta) >= lambda * gamma / 4`.
    pub t_hat_influence: f64,
    /// `exp(-n gamma^2 / 32)` plus three standard errors of the difference.
    pub allowance: f64,
    pub bound_ok: bool,
}

/// `lambdas` evenly spaced strictly inside `(0, beta / 2)`.
pub fn default_lambdas(beta: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|k| 0.5 * beta * k as f64 / (count + 1) as f64).collect()
}

/// Compares the empirical tail of the estimator's deviation with the tail of
/// the influence statistic, over independent replicates.
pub fn tail_experiment(cfg: &TailConfig) -> Result<Vec<TailRow>> {
    if cfg.dist.corruption.is_some() {
        return Err(Error::invalid("the tail experiment needs an uncorrupted law"));
    }
    if cfg.replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    let half = 0.5 * cfg.score.beta();
    if cfg.lambdas.is_empty() {
        return Err(Error::invalid("at least one lambda is required"));
    }
    for &l in &cfg.lambdas {
        if !(l > 0.0 && l < half) {
            return Err(Error::invalid(format!("lambda = {l} must lie in (0, beta/2) = (0, {half})")));
        }
    }
    cfg.dist.validate()?;

    let est_cfg = EstimatorConfig::new(cfg.score).with_max_iter(10_000);
    let theta = match cfg.reference {
        Reference::TrueMean => cfg.dist.true_mean(),
        Reference::PlugIn { n } => {
            let big = DatasetSpec {
                n,
                ..cfg.dist.with_seed(derive_seed(cfg.master_seed, u64::MAX))
            };
            irls_estimate(&generate(&big)?.x, &est_cfg)?.estimate
        }
    };

    let gamma = cfg.score.gamma();
    let mut deviations = Vec::with_capacity(cfg.replicates);
    let mut influences = Vec::with_capacity(cfg.replicates);
    for r in 0..cfg.replicates {
        let ds = generate(&cfg.dist.with_seed(derive_seed(cfg.master_seed, r as u64)))?;
        let t = irls_estimate(&ds.x, &est_cfg)?;
        deviations.push(distance(&t.estimate, &theta));
        influences.push(influence_statistic(&ds.x, &theta, &cfg.score));
    }

    let reps = cfg.replicates as f64;
    let floor = (-(cfg.dist.n as f64) * gamma * gamma / 32.0).exp();
    Ok(cfg
        .lambdas
        .iter()
        .map(|&lambda| {
            let t_est = deviations.iter().filter(|&&v| v >= lambda).count() as f64 / reps;
            let t_inf = influences.iter().filter(|&&v| v >= lambda * gamma / 4.0).count() as f64 / reps;
            let se = ((t_est * (1.0 - t_est) + t_inf * (1.0 - t_inf)) / reps).sqrt();
            let allowance = floor + 3.0 * se;
            TailRow {
                lambda,
                t_hat_estimator: t_est,
                t_hat_influence: t_inf,
                allowance,
                bound_ok: t_est <= t_inf + allowance,
            }
        })
        .collect())
}

pub const TAIL_HEADER: &str = "lambda,t_hat_estimator,t_hat_influence,allowance,bound_ok";

pub fn tail_csv(rows: &[TailRow]) -> String {
    let mut s = String::from(TAIL_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            format_float(r.lambda),
            format_float(r.t_hat_estimator),
            format_float(r.t_hat_influence),
            format_float(r.allowance),
            r.bound_ok
        ));
    }
    s
}

pub fn tail_table(rows: &[TailRow]) -> String {
    let mut s = format!(
        "{:>10}  {:>10}  {:>10}  {:>10}  {:>8}\n",
        "lambda", "t_T", "t_IF", "allowance", "bound_ok"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>10.5}  {:>10.5}  {:>10.5}  {:>10.5}  {:>8}\n",
            r.lambda, r.t_hat_estimator, r.t_hat_influence, r.allowance, r.bound_ok
        ));
    }
    s
}
