use serde_json::Value;

use robustmean_demo::{beta_trace, contaminated_cloud, score_curves};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn huber_curves_clip_at_beta() {
    let v = parse(&score_curves("huber", 1.0, 5, 3.0, 31));
    let x = v["x"].as_array().unwrap();
    let psi = v["psi"].as_array().unwrap();
    assert_eq!(x.len(), 31);
    for (xi, pi) in x.iter().zip(psi) {
        let (xi, pi) = (xi.as_f64().unwrap(), pi.as_f64().unwrap());
        assert!((pi - xi.min(1.0)).abs() < 1e-12);
    }
    assert_eq!(v["weight"][0], 1.0);
}

#[test]
fn bad_inputs_become_error_objects() {
    assert!(parse(&score_curves("tukey", 1.0, 5, 3.0, 10))["error"].is_string());
    assert!(parse(&score_curves("huber", -1.0, 5, 3.0, 10))["error"].is_string());
    assert!(parse(&contaminated_cloud(10, 20, 5.0, 5.0, 3.0, 1.0, 0))["error"].is_string());
}

#[test]
fn robust_estimates_resist_the_cluster() {
    let v = parse(&contaminated_cloud(400, 40, 60.0, 60.0, 3.0, 0.0, 5));
    assert_eq!(v["x"].as_array().unwrap().len(), 400);
    assert_eq!(v["outliers"].as_array().unwrap().len(), 40);
    let errors: Vec<(String, f64)> = v["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["label"].as_str().unwrap().to_owned(), e["error"].as_f64().unwrap()))
        .collect();
    let mean = errors.iter().find(|e| e.0 == "mean").unwrap().1;
    for (label, err) in &errors {
        if label != "mean" {
            assert!(*err < mean / 2.0, "{label}: {err} vs mean {mean}");
        }
    }
}

#[test]
fn trace_contains_the_selected_scale() {
    let v = parse(&beta_trace("catoni", 300, 0, 0.0, 4.0, 0.05, 1));
    let beta_hat = v["beta_hat"].as_f64().unwrap();
    let grid = v["beta"].as_array().unwrap();
    assert_eq!(grid.len(), 40);
    assert!(grid.iter().any(|b| b.as_f64().unwrap() == beta_hat));
}
