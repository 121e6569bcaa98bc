use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::Selection;
use crate::rng::{stream, Purpose};
use crate::utility::GradientSnapshot;

use super::model::ModelState;
use super::task::{Dataset, FederatedData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Uniform,
    SizeWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub probe_fraction: f64,
    pub aggregation: Aggregation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            local_epochs: 2,
            learning_rate: 0.01,
            batch_size: 20,
            probe_fraction: 0.05,
            aggregation: Aggregation::Uniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, samples_per_center: usize) -> Result<()> {
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "local_epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter("learning_rate must be > 0".into()));
        }
        if !(self.probe_fraction > 0.0 && self.probe_fraction <= 1.0) {
            return Err(Error::InvalidParameter("probe_fraction must be in (0, 1]".into()));
        }
        if probe_size(self.probe_fraction, samples_per_center) == 0 {
            return Err(Error::InvalidParameter("probe subsample would be empty".into()));
        }
        Ok(())
    }
}

/// `ceil(eps * n)`, ignoring floating noise below 1e-9 samples.
pub fn probe_size(epsilon: f64, n: usize) -> usize {
    ((epsilon * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Gradient over a uniform subsample without replacement of size
/// `ceil(eps * |D|)`. At `eps = 1` this is the exact gradient.
pub fn probe_gradient(model: &ModelState, data: &Dataset, epsilon: f64, rng_seed: u64) -> Vec<f64> {
    let n = data.len();
    let m = probe_size(epsilon, n).max(1);
    let mut idx: Vec<usize> = if m >= n {
        (0..n).collect()
    } else {
        let mut rng = stream(rng_seed, Purpose::Probe, &[]);
        index::sample(&mut rng, n, m).into_vec()
    };
    idx.sort_unstable();
    model.gradient_on(data, &idx)
}

/// Probes every center at `model`; subsamples depend only on
/// `(seed, slot, center)`.
pub fn probe_snapshot(
    model: &ModelState,
    data: &FederatedData,
    epsilon: f64,
    seed: u64,
    slot: usize,
) -> Result<GradientSnapshot> {
    let grads = data
        .centers
        .iter()
        .enumerate()
        .map(|(c, ds)| {
            let s = crate::rng::derive_seed(seed, Purpose::Probe, &[slot as u64, c as u64]);
            probe_gradient(model, ds, epsilon, s)
        })
        .collect();
    GradientSnapshot::new(grads, slot as u64)
}

fn local_epoch(
    start: &ModelState,
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
    coords: [u64; 3],
) -> ModelState {
    let mut model = start.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = stream(seed, Purpose::Train, &coords);
    order.shuffle(&mut rng);
    for chunk in order.chunks(cfg.batch_size) {
        let mut batch = chunk.to_vec();
        batch.sort_unstable();
        let g = model.gradient_on(data, &batch);
        model.step(&g, cfg.learning_rate);
    }
    model
}

/// One slot of training: `M` epochs, each a local SGD epoch on every
/// selected center from the current global model followed by averaging.
/// An empty selection leaves the model unchanged.
pub fn run_local_round(
    model: &ModelState,
    selected: &Selection,
    data: &FederatedData,
    cfg: &TrainConfig,
    seed: u64,
    slot: usize,
) -> ModelState {
    let chosen: Vec<usize> = selected.selected().collect();
    if chosen.is_empty() {
        return model.clone();
    }
    let mut global = model.clone();
    for epoch in 0..cfg.local_epochs {
        let run = |&c: &usize| {
            local_epoch(
                &global,
                &data.centers[c],
                cfg,
                seed,
                [slot as u64, c as u64, epoch as u64],
            )
        };
        #[cfg(feature = "parallel")]
        let locals: Vec<ModelState> = {
            use rayon::prelude::*;
            chosen.par_iter().map(run).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let locals: Vec<ModelState> = chosen.iter().map(run).collect();

        let weights: Vec<f64> = match cfg.aggregation {
            Aggregation::Uniform => vec![1.0; chosen.len()],
            Aggregation::SizeWeighted => chosen.iter().map(|&c| data.centers[c].len() as f64).collect(),
        };
        global = average(&locals, &weights);
    }
    global
}

fn average(models: &[ModelState], weights: &[f64]) -> ModelState {
    if models.len() == 1 {
        return models[0].clone();
    }
    let total: f64 = weights.iter().sum();
    let mut out = models[0].clone();
    for (k, w) in out.weights.iter_mut().enumerate() {
        *w = models
            .iter()
            .zip(weights)
            .map(|(m, a)| a * m.weights[k])
            .sum::<f64>()
            / total;
    }
    out.step_count = models.iter().map(|m| m.step_count).max().unwrap_or(0);
    out
}

/// Models after each of `horizon` slots with every center training in every
/// slot, starting from `init`.
pub fn full_participation_trajectory(
    init: &ModelState,
    data: &FederatedData,
    cfg: &TrainConfig,
    horizon: usize,
    seed: u64,
) -> Vec<ModelState> {
    let all = Selection::full(data.n_centers());
    let mut out = Vec::with_capacity(horizon);
    let mut w = init.clone();
    for t in 0..horizon {
        w = run_local_round(&w, &all, data, cfg, seed, t);
        out.push(w.clone());
    }
    out
}

/// Model in effect at the start of each slot: `init`, then each entry of
/// the trajectory except the last.
pub fn slot_start_models(init: &ModelState, trajectory: &[ModelState]) -> Vec<ModelState> {
    std::iter::once(init.clone())
        .chain(
            trajectory
                .iter()
                .take(trajectory.len().saturating_sub(1))
                .cloned(),
        )
        .collect()
}
