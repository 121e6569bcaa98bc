//! Coreset learning-performance metric over probed gradients.
//!
//! For a nonempty selected set `K` the utility is
//! `b - sum_j min_{i in K} |g_j - g_i|`; for the empty set it is
//! `b - 2 N max_i |g_i|`. Norms are Euclidean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::Selection;

/// Per-center gradients `grad f_i(w)` probed at one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSnapshot {
    gradients: Vec<Vec<f64>>,
    pub model_tag: u64,
}

impl GradientSnapshot {
    pub fn new(gradients: Vec<Vec<f64>>, model_tag: u64) -> Result<Self> {
        let Some(first) = gradients.first() else {
            return Err(Error::EmptyInput("gradient snapshot"));
        };
        let d = first.len();
        for (i, g) in gradients.iter().enumerate() {
            if g.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "gradient {i} has dimension {}, expected {d}",
                    g.len()
                )));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "gradient {i} has non-finite entries"
                )));
            }
        }
        Ok(Self { gradients, model_tag })
    }

    pub fn n_centers(&self) -> usize {
        self.gradients.len()
    }

    pub fn dim(&self) -> usize {
        self.gradients[0].len()
    }

    pub fn gradients(&self) -> &[Vec<f64>] {
        &self.gradients
    }

    pub fn norms(&self) -> Vec<f64> {
        self.gradients.iter().map(|g| norm(g)).collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.norms().into_iter().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityConfig {
    pub b: f64,
    pub gradient_norm_cap: f64,
}

impl UtilityConfig {
    /// Offset `b = 2 N G_hat`, the smallest value that keeps the utility
    /// nonnegative for every selection when all norms stay below the cap.
    pub fn for_cap(n_centers: usize, gradient_norm_cap: f64) -> Result<Self> {
        let cfg = Self {
            b: 2.0 * n_centers as f64 * gradient_norm_cap,
            gradient_norm_cap,
        };
        cfg.validate(n_centers)?;
        Ok(cfg)
    }

    pub fn validate(&self, n_centers: usize) -> Result<()> {
        if !(self.gradient_norm_cap > 0.0) || !self.gradient_norm_cap.is_finite() {
            return Err(Error::InvalidParameter(
                "gradient_norm_cap must be positive and finite".into(),
            ));
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::InvalidParameter("b must be positive and finite".into()));
        }
        let need = 2.0 * n_centers as f64 * self.gradient_norm_cap;
        if self.b < need * (1.0 - 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "b = {} is below 2*N*cap = {need}",
                self.b
            )));
        }
        Ok(())
    }
}

/// Utility evaluator for one snapshot with the pairwise distance matrix
/// computed once up front.
#[derive(Debug, Clone)]
pub struct CoresetUtility {
    n: usize,
    dist: Vec<f64>,
    max_norm: f64,
    b: f64,
}

impl CoresetUtility {
    pub fn new(snapshot: &GradientSnapshot, cfg: &UtilityConfig) -> Result<Self> {
        let n = snapshot.n_centers();
        cfg.validate(n)?;
        let max_norm = snapshot.max_norm();
        if max_norm > cfg.gradient_norm_cap {
            return Err(Error::GradientNormCap {
                norm: max_norm,
                cap: cfg.gradient_norm_cap,
            });
        }
        Ok(Self::unchecked(snapshot, cfg.b))
    }

    /// Builds the evaluator without enforcing the norm cap; the result can
    /// be negative.
    pub fn unchecked(snapshot: &GradientSnapshot, b: f64) -> Self {
        let n = snapshot.n_centers();
        let g = snapshot.gradients();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = distance(&g[i], &g[j]);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Self {
            n,
            dist,
            max_norm: snapshot.max_norm(),
            b,
        }
    }

    pub fn n_centers(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn empty_value(&self) -> f64 {
        self.b - 2.0 * self.n as f64 * self.max_norm
    }

    pub fn value(&self, selection: &Selection) -> f64 {
        debug_assert_eq!(selection.len(), self.n);
        let chosen: Vec<usize> = selection.selected().collect();
        self.value_of_set(&chosen)
    }

    pub fn value_of_set(&self, chosen: &[usize]) -> f64 {
        if chosen.is_empty() {
            return self.empty_value();
        }
        let cover: f64 = (0..self.n)
            .map(|j| {
                let row = &self.dist[j * self.n..(j + 1) * self.n];
                chosen.iter().map(|&i| row[i]).fold(f64::INFINITY, f64::min)
            })
            .sum();
        self.b - cover
    }
}

pub fn utility(snapshot: &GradientSnapshot, selection: &Selection, cfg: &UtilityConfig) -> Result<f64> {
    if selection.len() != snapshot.n_centers() {
        return Err(Error::DimensionMismatch(format!(
            "selection over {} centers, snapshot has {}",
            selection.len(),
            snapshot.n_centers()
        )));
    }
    Ok(CoresetUtility::new(snapshot, cfg)?.value(selection))
}

/// Largest gradient norm seen across all snapshots (empirical `G`).
pub fn empirical_gradient_bound<'a>(
    snapshots: impl IntoIterator<Item = &'a GradientSnapshot>,
) -> Result<f64> {
    snapshots
        .into_iter()
        .map(GradientSnapshot::max_norm)
        .reduce(f64::max)
        .ok_or(Error::EmptyInput("snapshot sequence"))
}

/// `max_i |g_i - mean(g)|` (empirical `delta`).
pub fn empirical_divergence(snapshot: &GradientSnapshot) -> f64 {
    let n = snapshot.n_centers() as f64;
    let mut mean = vec![0.0; snapshot.dim()];
    for g in snapshot.gradients() {
        for (m, x) in mean.iter_mut().zip(g) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    snapshot
        .gradients()
        .iter()
        .map(|g| distance(g, &mean))
        .fold(0.0, f64::max)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
