//! WebAssembly bindings behind `www/index.html`.
//!
//! Every export returns a JSON string so the page needs no glue beyond
//! `JSON.parse`. Errors come back as `{"error": "..."}`.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use robustmean::bench::{run_estimator, BetaChoice, EstimatorKind};
use robustmean::data::{
    generate, CorruptionSpec, CorruptionStrategy, DatasetSpec, Generator, MixtureComponent,
};
use robustmean::tuning::{select_beta, TuningOptions};
use robustmean::{Result, ScoreFamily, ScoreKind};

fn parse_kind(name: &str) -> Result<ScoreKind> {
    name.parse()
}

fn respond(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Samples `psi`, `psi'`, `rho` and the weight `psi(x)/x` on `[0, x_max]`.
#[wasm_bindgen]
pub fn score_curves(kind: &str, beta: f64, p: u32, x_max: f64, points: usize) -> String {
    respond(score_curves_value(kind, beta, p, x_max, points))
}

fn score_curves_value(kind: &str, beta: f64, p: u32, x_max: f64, points: usize) -> Result<Value> {
    let f = ScoreFamily::new(parse_kind(kind)?, beta, p)?;
    let points = points.clamp(2, 2000);
    let x_max = if x_max.is_finite() && x_max > 0.0 { x_max } else { 4.0 * beta };
    let xs: Vec<f64> = (0..points).map(|i| x_max * i as f64 / (points - 1) as f64).collect();
    let psi = xs.iter().map(|&x| f.psi(x)).collect::<Result<Vec<_>>>()?;
    let dpsi = xs.iter().map(|&x| f.psi_prime(x)).collect::<Result<Vec<_>>>()?;
    let rho = xs.iter().map(|&x| f.rho(x)).collect::<Result<Vec<_>>>()?;
    let weight: Vec<f64> = xs.iter().map(|&x| f.weight(x)).collect();
    Ok(json!({ "x": xs, "psi": psi, "psi_prime": dpsi, "rho": rho, "weight": weight, "gamma": f.gamma() }))
}

fn cloud(n: usize, outliers: usize, outlier_x: f64, outlier_y: f64, dof: f64, seed: u64) -> Result<robustmean::data::Dataset> {
    let spec = DatasetSpec {
        label: "demo".into(),
        generator: Generator::StudentMixture {
            components: vec![MixtureComponent {
                weight: 1.0,
                mean: vec![0.0, 0.0],
                dof,
            }],
        },
        n,
        d: 2,
        corruption: (outliers > 0).then(|| CorruptionSpec {
            count: outliers,
            strategy: CorruptionStrategy::ConstantVector {
                value: vec![outlier_x, outlier_y],
            },
        }),
        seed,
    };
    generate(&spec)
}

/// A 2-D Student sample with `outliers` rows moved to `(outlier_x, outlier_y)`,
/// and the location found by each estimator. `beta <= 0` tunes the scale.
#[wasm_bindgen]
pub fn contaminated_cloud(
    n: usize,
    outliers: usize,
    outlier_x: f64,
    outlier_y: f64,
    dof: f64,
    beta: f64,
    seed: u64,
) -> String {
    respond(cloud_value(n, outliers, outlier_x, outlier_y, dof, beta, seed))
}

fn cloud_value(n: usize, outliers: usize, ox: f64, oy: f64, dof: f64, beta: f64, seed: u64) -> Result<Value> {
    let ds = cloud(n, outliers, ox, oy, dof, seed)?;
    let choice = if beta > 0.0 {
        BetaChoice::Fixed { value: beta }
    } else {
        BetaChoice::Auto
    };
    let mut estimates = Vec::new();
    let kinds = [
        ("huber", EstimatorKind::MEstimator { score: ScoreKind::Huber, p: 5, beta: choice }),
        ("catoni", EstimatorKind::MEstimator { score: ScoreKind::Catoni, p: 5, beta: choice }),
        ("poly", EstimatorKind::MEstimator { score: ScoreKind::Polynomial, p: 5, beta: choice }),
        ("mean", EstimatorKind::EmpiricalMean),
        ("gmed", EstimatorKind::GeometricMedian),
    ];
    for (label, kind) in kinds {
        let out = run_estimator(&kind, &ds)?;
        let error = robustmean::matrix::distance(&out.estimate, &ds.true_mean);
        estimates.push(json!({
            "label": label,
            "point": out.estimate,
            "error": error,
            "iterations": out.iterations,
            "converged": out.converged,
            "beta": out.beta_used,
        }));
    }
    let xs: Vec<f64> = ds.x.column(0);
    let ys: Vec<f64> = ds.x.column(1);
    Ok(json!({ "x": xs, "y": ys, "outliers": ds.outlier_indices, "estimates": estimates }))
}

/// The tuning grid for the same kind of sample: `beta`, criterion and
/// variance proxy at each grid point, plus the selected scale.
#[wasm_bindgen]
pub fn beta_trace(kind: &str, n: usize, outliers: usize, outlier_distance: f64, dof: f64, budget: f64, seed: u64) -> String {
    respond(beta_trace_value(kind, n, outliers, outlier_distance, dof, budget, seed))
}

fn beta_trace_value(
    kind: &str,
    n: usize,
    outliers: usize,
    distance: f64,
    dof: f64,
    budget: f64,
    seed: u64,
) -> Result<Value> {
    let ds = cloud(n, outliers, distance, distance, dof, seed)?;
    let opts = TuningOptions {
        corruption_budget: budget,
        ..TuningOptions::default()
    };
    let sel = select_beta(&ds.x, parse_kind(kind)?, &opts)?;
    let beta: Vec<f64> = sel.grid.iter().map(|g| g.beta).collect();
    let criterion: Vec<Option<f64>> = sel.grid.iter().map(|g| g.criterion).collect();
    let v_hat: Vec<Option<f64>> = sel.grid.iter().map(|g| g.v_hat).collect();
    Ok(json!({
        "beta": beta,
        "criterion": criterion,
        "v_hat": v_hat,
        "beta_hat": sel.beta_hat,
        "mad": sel.mad,
        "estimate": sel.fit.estimate,
    }))
}
