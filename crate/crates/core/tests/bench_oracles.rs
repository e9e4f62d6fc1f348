use std::collections::BTreeMap;

use robustmean::bench::{
    figure_config, run_benchmark, run_estimator, summarize, summary_csv, BetaChoice, EstimatorKind,
};
use robustmean::comparators::empirical_mean;
use robustmean::data::{dataset_presets, derive_seed, generate};
use robustmean::matrix::distance;
use robustmean::ScoreKind;

/// The two outliers shift the mean by 6 while tuned Huber stays within about
/// 0.65 of the truth on Pareto(2.1) data, so the ratio sits between 7 and 13.
#[test]
fn mean_is_swamped_by_two_far_outliers() {
    let spec = dataset_presets().into_iter().find(|s| s.label == "dataset1").unwrap();
    let huber = EstimatorKind::MEstimator {
        score: ScoreKind::Huber,
        p: 5,
        beta: BetaChoice::Auto,
    };
    for seed in 0..100 {
        let ds = generate(&spec.with_seed(derive_seed(77, seed))).unwrap();
        let mean_err = distance(&empirical_mean(&ds.x).unwrap(), &ds.true_mean);
        let huber_err = distance(&run_estimator(&huber, &ds).unwrap().estimate, &ds.true_mean);
        assert!(mean_err > 5.0 * huber_err, "seed {seed}: {mean_err} vs {huber_err}");
    }
}

/// Order statistics at `floor((n-1) q)` and `ceil((n-1) q)`, averaged.
fn midpoint_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    (sorted[h.floor() as usize] + sorted[h.ceil() as usize]) / 2.0
}

#[test]
fn summary_matches_recomputation_from_raw_csv() {
    let cfg = figure_config(6, 13);
    let mut raw = Vec::new();
    let records = run_benchmark(&cfg, 1, Some(&mut raw)).unwrap();
    let text = String::from_utf8(raw).unwrap();

    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for line in text.lines().skip(1).filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split(',').collect();
        groups
            .entry((f[0].to_owned(), f[1].to_owned()))
            .or_default()
            .push(f[3].parse().unwrap());
    }
    let summaries = summarize(&records).unwrap();
    assert_eq!(summaries.len(), groups.len());
    for s in &summaries {
        let mut v = groups[&(s.dataset_label.clone(), s.estimator_label.clone())].clone();
        v.sort_by(f64::total_cmp);
        assert_eq!(s.count, v.len());
        assert_eq!(s.failed, 0);
        assert_eq!(s.median, midpoint_quantile(&v, 0.5));
        assert_eq!(s.q25, midpoint_quantile(&v, 0.25));
        assert_eq!(s.q75, midpoint_quantile(&v, 0.75));
        assert_eq!(s.max, *v.last().unwrap());
        assert!((s.mean - v.iter().sum::<f64>() / v.len() as f64).abs() <= 1e-15 * s.max);
    }
    assert_eq!(summary_csv(&summaries).lines().count(), 1 + groups.len());
}
