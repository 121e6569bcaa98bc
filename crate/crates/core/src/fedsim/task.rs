use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::{Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub n_centers: usize,
    pub n_classes: usize,
    pub dim: usize,
    /// Standard deviation of class-mean coordinates.
    pub class_sep: f64,
    pub noise_scale: f64,
    pub samples_per_center: usize,
    pub test_samples: usize,
    pub dirichlet_alpha: f64,
    pub seed: u64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            n_centers: 10,
            n_classes: 10,
            dim: 10,
            class_sep: 1.0,
            noise_scale: 1.0,
            samples_per_center: 200,
            test_samples: 2000,
            dirichlet_alpha: 0.8,
            seed: 0,
        }
    }
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_centers == 0 {
            return bad("n_centers must be >= 1");
        }
        if self.n_classes < 2 {
            return bad("n_classes must be >= 2");
        }
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.samples_per_center == 0 || self.test_samples == 0 {
            return bad("sample counts must be >= 1");
        }
        if !(self.dirichlet_alpha > 0.0) || !self.dirichlet_alpha.is_finite() {
            return bad("dirichlet_alpha must be positive and finite");
        }
        if !(self.noise_scale > 0.0) || !(self.class_sep >= 0.0) {
            return bad("noise_scale must be > 0 and class_sep >= 0");
        }
        Ok(())
    }
}

/// Row-major features with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature values for {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self {
            dim,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Each sample repeated `k` times.
    pub fn repeated(&self, k: usize) -> Self {
        let mut features = Vec::with_capacity(self.features.len() * k);
        let mut labels = Vec::with_capacity(self.labels.len() * k);
        for i in 0..self.len() {
            for _ in 0..k {
                features.extend_from_slice(self.x(i));
                labels.push(self.y(i));
            }
        }
        Self {
            dim: self.dim,
            features,
            labels,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedData {
    pub n_classes: usize,
    pub centers: Vec<Dataset>,
    pub test: Dataset,
    /// Dirichlet class proportions drawn for each center.
    pub label_proportions: Vec<Vec<f64>>,
}

impl FederatedData {
    pub fn n_centers(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.test.dim
    }
}

pub fn generate_task(cfg: &SyntheticTask) -> Result<FederatedData> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, Purpose::Task, &[0]);
    let mean_dist = Normal::new(0.0, cfg.class_sep).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let means: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|_| (0..cfg.dim).map(|_| mean_dist.sample(&mut rng)).collect())
        .collect();
    let noise = Normal::new(0.0, cfg.noise_scale).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let gamma = Gamma::new(cfg.dirichlet_alpha, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let sample = |labels: &[usize], rng: &mut crate::rng::StreamRng| {
        let mut features = Vec::with_capacity(labels.len() * cfg.dim);
        for &y in labels {
            features.extend(means[y].iter().map(|m| m + noise.sample(rng)));
        }
        features
    };

    let mut centers = Vec::with_capacity(cfg.n_centers);
    let mut label_proportions = Vec::with_capacity(cfg.n_centers);
    for c in 0..cfg.n_centers {
        let mut rng = stream(cfg.seed, Purpose::Task, &[1, c as u64]);
        let raw: Vec<f64> = (0..cfg.n_classes).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = raw.iter().sum();
        let props: Vec<f64> = if total > 0.0 {
            raw.iter().map(|g| g / total).collect()
        } else {
            vec![1.0 / cfg.n_classes as f64; cfg.n_classes]
        };
        let pick = WeightedIndex::new(&props).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let labels: Vec<usize> = (0..cfg.samples_per_center)
            .map(|_| pick.sample(&mut rng))
            .collect();
        let features = sample(&labels, &mut rng);
        centers.push(Dataset::new(cfg.dim, features, labels)?);
        label_proportions.push(props);
    }

    let mut rng = stream(cfg.seed, Purpose::Task, &[2]);
    let test_labels: Vec<usize> = (0..cfg.test_samples).map(|i| i % cfg.n_classes).collect();
    let test_features = sample(&test_labels, &mut rng);

    Ok(FederatedData {
        n_classes: cfg.n_classes,
        centers,
        test: Dataset::new(cfg.dim, test_features, test_labels)?,
        label_proportions,
    })
}

/// CSV dump, one row per sample: `center,label,x0,..,x{d-1}`. The test set
/// is written with center `test`.
pub fn write_datasets(data: &FederatedData) -> String {
    let d = data.dim();
    let mut out = String::from("center,label");
    for k in 0..d {
        let _ = write!(out, ",x{k}");
    }
    out.push('\n');
    let mut rows = |tag: &str, ds: &Dataset| {
        for i in 0..ds.len() {
            let _ = write!(out, "{tag},{}", ds.y(i));
            for v in ds.x(i) {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
    };
    for (c, ds) in data.centers.iter().enumerate() {
        rows(&c.to_string(), ds);
    }
    rows("test", &data.test);
    out
}

/// Inverse of [`write_datasets`]. Label proportions are not stored and come
/// back empty.
pub fn read_datasets(text: &str, n_classes: usize) -> Result<FederatedData> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyInput("dataset csv"))?;
    let dim = header.split(',').count().saturating_sub(2);
    if dim == 0 || !header.starts_with("center,label") {
        return Err(Error::Config(format!("bad dataset header {header:?}")));
    }
    let mut centers: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    let mut test = (Vec::new(), Vec::new());
    for (row, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        let bad = || Error::Config(format!("dataset row {}: malformed", row + 2));
        if parts.len() != dim + 2 {
            return Err(bad());
        }
        let label: usize = parts[1].parse().map_err(|_| bad())?;
        if label >= n_classes {
            return Err(bad());
        }
        let xs = parts[2..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let slot = if parts[0] == "test" {
            &mut test
        } else {
            let c: usize = parts[0].parse().map_err(|_| bad())?;
            if c >= centers.len() {
                centers.resize_with(c + 1, Default::default);
            }
            &mut centers[c]
        };
        slot.0.extend(xs);
        slot.1.push(label);
    }
    Ok(FederatedData {
        n_classes,
        centers: centers
            .into_iter()
            .map(|(f, l)| Dataset::new(dim, f, l))
            .collect::<Result<_>>()?,
        test: Dataset::new(dim, test.0, test.1)?,
        label_proportions: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let cfg = SyntheticTask {
            seed: 9,
            ..Default::default()
        };
        let a = generate_task(&cfg).unwrap();
        let b = generate_task(&cfg).unwrap();
        assert_eq!(write_datasets(&a), write_datasets(&b));
        let c = generate_task(&SyntheticTask { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.centers[0], c.centers[0]);
    }

    #[test]
    fn large_alpha_is_near_uniform() {
        for seed in 0..5 {
            let cfg = SyntheticTask {
                dirichlet_alpha: 1e6,
                seed,
                ..Default::default()
            };
            let data = generate_task(&cfg).unwrap();
            for props in &data.label_proportions {
                for p in props {
                    assert!((p - 0.1).abs() < 0.02 * 0.1, "{p}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(generate_task(&SyntheticTask {
            dirichlet_alpha: 0.0,
            ..Default::default()
        })
        .is_err());
        assert!(generate_task(&SyntheticTask {
            dirichlet_alpha: -1.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn csv_round_trip() {
        let cfg = SyntheticTask {
            n_centers: 3,
            samples_per_center: 5,
            test_samples: 4,
            dim: 3,
            n_classes: 4,
            ..Default::default()
        };
        let data = generate_task(&cfg).unwrap();
        let back = read_datasets(&write_datasets(&data), 4).unwrap();
        assert_eq!(back.centers, data.centers);
        assert_eq!(back.test, data.test);
    }
}
