//! Seeded heavy-tailed dataset generators, adversarial corruption and the
//! plain CSV format used to exchange observation matrices.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub dof: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Generator {
    /// Independent Pareto(alpha, scale) coordinates.
    ParetoCoords { alpha: f64, scale: f64 },
    /// Mixture of multivariate Student laws with identity shape matrix.
    StudentMixture { components: Vec<MixtureComponent> },
    /// Every row equal to `value * 1_d`.
    PointMass { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CorruptionStrategy {
    ConstantVector { value: Vec<f64> },
    ScaledOnes { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub count: usize,
    pub strategy: CorruptionStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub label: String,
    pub generator: Generator,
    pub n: usize,
    pub d: usize,
    pub corruption: Option<CorruptionSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub true_mean: Vec<f64>,
    pub outlier_indices: Vec<usize>,
    pub spec: DatasetSpec,
}

impl Dataset {
    pub fn corruption_fraction(&self) -> f64 {
        self.outlier_indices.len() as f64 / self.x.nrows() as f64
    }
}

impl DatasetSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::invalid("n and d must be at least 1"));
        }
        match &self.generator {
            Generator::ParetoCoords { alpha, scale } => {
                if !(*alpha > 1.0) {
                    return Err(Error::invalid(format!("Pareto shape must exceed 1, got {alpha}")));
                }
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(Error::invalid(format!("Pareto scale must be positive, got {scale}")));
                }
            }
            Generator::StudentMixture { components } => {
                if components.is_empty() {
                    return Err(Error::invalid("mixture needs at least one component"));
                }
                let mut total = 0.0;
                for c in components {
                    if !(c.weight > 0.0) {
                        return Err(Error::invalid("mixture weights must be positive"));
                    }
                    if !(c.dof > 1.0) || !c.dof.is_finite() {
                        return Err(Error::invalid(format!("degrees of freedom must exceed 1, got {}", c.dof)));
                    }
                    if c.mean.len() != self.d {
                        return Err(Error::DimensionMismatch {
                            expected: self.d,
                            got: c.mean.len(),
                        });
                    }
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!("mixture weights sum to {total}")));
                }
            }
            Generator::PointMass { value } => {
                if !value.is_finite() {
                    return Err(Error::invalid("point mass location must be finite"));
                }
            }
        }
        if let Some(c) = &self.corruption {
            if 2 * c.count >= self.n {
                return Err(Error::invalid(format!(
                    "outliers must be fewer than inliers: {} of {}",
                    c.count, self.n
                )));
            }
            match &c.strategy {
                CorruptionStrategy::ConstantVector { value } if value.len() != self.d => {
                    return Err(Error::DimensionMismatch {
                        expected: self.d,
                        got: value.len(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Analytic mean of the inlier law.
    pub fn true_mean(&self) -> Vec<f64> {
        match &self.generator {
            Generator::ParetoCoords { alpha, scale } => vec![scale * alpha / (alpha - 1.0); self.d],
            Generator::StudentMixture { components } => {
                let mut m = vec![0.0; self.d];
                for c in components {
                    m.iter_mut().zip(&c.mean).for_each(|(a, b)| *a += c.weight * b);
                }
                m
            }
            Generator::PointMass { value } => vec![*value; self.d],
        }
    }
}

/// Draws a dataset; bit-identical for identical specs.
///
/// Every row is drawn from the inlier law first, then the first
/// `corruption.count` rows are overwritten, so the remaining rows match the
/// uncorrupted draw with the same seed.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut x = Matrix::zeros(n, d);

    match &spec.generator {
        Generator::ParetoCoords { alpha, scale } => {
            let exponent = -1.0 / alpha;
            for i in 0..n {
                for v in x.row_mut(i) {
                    // 1 - U lies in (0, 1]
                    let u: f64 = 1.0 - rng.random::<f64>();
                    *v = scale * u.powf(exponent);
                }
            }
        }
        Generator::StudentMixture { components } => {
            let chi: Vec<ChiSquared<f64>> = components
                .iter()
                .map(|c| ChiSquared::new(c.dof).map_err(|e| Error::invalid(e.to_string())))
                .collect::<Result<_>>()?;
            for i in 0..n {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut which = components.len() - 1;
                for (k, c) in components.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        which = k;
                        break;
                    }
                }
                let comp = &components[which];
                let w = chi[which].sample(&mut rng);
                let factor = (comp.dof / w).sqrt();
                for (v, mu) in x.row_mut(i).iter_mut().zip(&comp.mean) {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = mu + z * factor;
                }
            }
        }
        Generator::PointMass { value } => {
            for i in 0..n {
                x.row_mut(i).iter_mut().for_each(|v| *v = *value);
            }
        }
    }

    let mut outlier_indices = Vec::new();
    if let Some(c) = &spec.corruption {
        for i in 0..c.count {
            let row = x.row_mut(i);
            match &c.strategy {
                CorruptionStrategy::ConstantVector { value } => row.copy_from_slice(value),
                CorruptionStrategy::ScaledOnes { scale } => row.iter_mut().for_each(|v| *v = *scale),
            }
            outlier_indices.push(i);
        }
    }

    Ok(Dataset {
        x,
        true_mean: spec.true_mean(),
        outlier_indices,
        spec: spec.clone(),
    })
}

/// Two outliers at `300 * 1_d`, as in the corrupted presets.
fn two_far_outliers() -> Option<CorruptionSpec> {
    Some(CorruptionSpec {
        count: 2,
        strategy: CorruptionStrategy::ScaledOnes { scale: 300.0 },
    })
}

fn student_pair(d: usize, dof: f64) -> Generator {
    Generator::StudentMixture {
        components: vec![
            MixtureComponent {
                weight: 0.4,
                mean: vec![0.0; d],
                dof,
            },
            MixtureComponent {
                weight: 0.6,
                mean: vec![2.0; d],
                dof,
            },
        ],
    }
}

/// The four benchmark configurations (n = 1000, d = 100).
pub fn dataset_presets() -> Vec<DatasetSpec> {
    let (n, d) = (1000, 100);
    vec![
        DatasetSpec {
            label: "dataset1".into(),
            generator: Generator::ParetoCoords { alpha: 2.1, scale: 1.0 },
            n,
            d,
            corruption: two_far_outliers(),
            seed: 0,
        },
        DatasetSpec {
            label: "dataset2".into(),
            generator: Generator::ParetoCoords { alpha: 3.0, scale: 1.0 },
            n,
            d,
            corruption: None,
            seed: 0,
        },
        DatasetSpec {
            label: "dataset3".into(),
            generator: student_pair(d, 2.1),
            n,
            d,
            corruption: two_far_outliers(),
            seed: 0,
        },
        DatasetSpec {
            label: "dataset4".into(),
            generator: student_pair(d, 3.0),
            n,
            d,
            corruption: None,
            seed: 0,
        },
    ]
}

/// SplitMix64 finaliser: a bijective 64-bit avalanche mix.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `index` under `master`:
/// `splitmix64(master + (index + 1) * 0x9E3779B97F4A7C15)` (wrapping).
///
/// For a fixed master the argument is injective in `index` (the increment is
/// odd) and the finaliser is a bijection, so distinct indices never share a seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Writes one row per line, comma separated, shortest round-trip floats.
pub fn write_csv<W: Write>(x: &Matrix, mut out: W) -> std::io::Result<()> {
    let mut line = String::new();
    for row in x.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format_float(*v));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    // Display picks the shortest round-trip digits but never uses an
    // exponent, which gets long for tiny or huge magnitudes.
    let plain = format!("{v}");
    let sci = format!("{v:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

/// Parses a header-less numeric CSV. Blank lines are skipped; every other
/// line must carry the same number of fields.
pub fn read_csv<R: BufRead>(input: R) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: k + 1,
                msg: format!("not a number: `{}`", field.trim()),
            })?;
            data.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(Error::Parse {
                    line: k + 1,
                    msg: format!("expected {c} fields, found {count}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or(Error::EmptyInput("CSV file has no rows"))?;
    Matrix::new(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparators::empirical_mean;
    use crate::matrix::distance;
    use proptest::prelude::*;

    #[test]
    fn pareto_true_mean() {
        let spec = DatasetSpec {
            label: "p".into(),
            generator: Generator::ParetoCoords { alpha: 3.0, scale: 1.0 },
            n: 3,
            d: 4,
            corruption: None,
            seed: 1,
        };
        assert_eq!(generate(&spec).unwrap().true_mean, vec![1.5; 4]);
    }

    #[test]
    fn first_preset_places_two_outliers() {
        let presets = dataset_presets();
        let ds = generate(&presets[0].with_seed(3)).unwrap();
        let far = ds.x.rows().filter(|r| r.iter().all(|&v| v == 300.0)).count();
        assert_eq!(far, 2);
        assert_eq!(ds.outlier_indices, vec![0, 1]);
        assert!((ds.corruption_fraction() - 0.002).abs() < 1e-15);
    }

    #[test]
    fn preset_table() {
        let p = dataset_presets();
        assert_eq!(p.len(), 4);
        assert_eq!(p[0].corruption.as_ref().unwrap().count, 2);
        assert!(p[1].corruption.is_none());
        assert!(p[3].corruption.is_none());
        match &p[2].generator {
            Generator::StudentMixture { components } => {
                assert!(components.iter().all(|c| c.dof == 2.1));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(p.iter().all(|s| s.n == 1000 && s.d == 100));
    }

    #[test]
    fn student_mixture_mean() {
        let spec = DatasetSpec {
            label: "s".into(),
            generator: student_pair(7, 3.0),
            n: 10,
            d: 7,
            corruption: None,
            seed: 0,
        };
        let m = spec.true_mean();
        assert!(m.iter().all(|v| (v - 1.2).abs() < 1e-15));
    }

    #[test]
    fn pareto_sample_mean_converges() {
        let base = DatasetSpec {
            label: "p".into(),
            generator: Generator::ParetoCoords { alpha: 3.0, scale: 1.0 },
            n: 100_000,
            d: 5,
            corruption: None,
            seed: 0,
        };
        // Var = alpha / ((alpha-1)^2 (alpha-2)) = 0.75 per coordinate
        let se = (0.75f64 / 100_000.0).sqrt();
        for seed in 0..10 {
            let ds = generate(&base.with_seed(derive_seed(99, seed))).unwrap();
            let m = empirical_mean(&ds.x).unwrap();
            assert!(distance(&m, &ds.true_mean) <= 0.1, "seed {seed}");
            if seed == 0 {
                for v in &m {
                    assert!((v - 1.5).abs() <= 3.0 * se, "coordinate mean {v}");
                }
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let good = DatasetSpec {
            label: "x".into(),
            generator: Generator::ParetoCoords { alpha: 3.0, scale: 1.0 },
            n: 10,
            d: 2,
            corruption: None,
            seed: 0,
        };
        assert!(good.validate().is_ok());
        let bad_alpha = DatasetSpec {
            generator: Generator::ParetoCoords { alpha: 1.0, scale: 1.0 },
            ..good.clone()
        };
        assert!(generate(&bad_alpha).is_err());
        let too_many = DatasetSpec {
            corruption: Some(CorruptionSpec {
                count: 5,
                strategy: CorruptionStrategy::ScaledOnes { scale: 1.0 },
            }),
            ..good.clone()
        };
        assert!(generate(&too_many).is_err());
        let bad_weights = DatasetSpec {
            generator: Generator::StudentMixture {
                components: vec![MixtureComponent {
                    weight: 0.5,
                    mean: vec![0.0; 2],
                    dof: 3.0,
                }],
            },
            ..good.clone()
        };
        assert!(generate(&bad_weights).is_err());
        let bad_dof = DatasetSpec {
            generator: Generator::StudentMixture {
                components: vec![MixtureComponent {
                    weight: 1.0,
                    mean: vec![0.0; 2],
                    dof: 1.0,
                }],
            },
            ..good
        };
        assert!(generate(&bad_dof).is_err());
    }

    #[test]
    fn corruption_leaves_inliers_untouched() {
        let clean = dataset_presets()[2].with_seed(5);
        let dirty = generate(&clean).unwrap();
        let clean = generate(&DatasetSpec {
            corruption: None,
            ..clean
        })
        .unwrap();
        for i in 2..1000 {
            assert_eq!(dirty.x.row(i), clean.x.row(i));
        }
    }

    #[test]
    fn seeds_are_distinct_per_replicate() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }

    #[test]
    fn malformed_csv_reports_line() {
        let text = "1,2\n3,4\n5,x\n";
        match read_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match read_csv("1,2\n3\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_csv("".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..60), cols in 1usize..4) {
            let rows = values.len() / cols;
            prop_assume!(rows > 0);
            let x = Matrix::new(rows, cols, values[..rows * cols].to_vec()).unwrap();
            let mut buf = Vec::new();
            write_csv(&x, &mut buf).unwrap();
            let back = read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.nrows(), rows);
            for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn generation_is_deterministic(seed in any::<u64>(), which in 0usize..4) {
            let mut spec = dataset_presets()[which].with_seed(seed);
            spec.n = 30;
            spec.d = 3;
            if let Generator::StudentMixture { components } = &mut spec.generator {
                for c in components.iter_mut() {
                    c.mean.truncate(3);
                }
            }
            let a = generate(&spec).unwrap();
            let b = generate(&spec).unwrap();
            prop_assert_eq!(a.x, b.x);
        }
    }
}
