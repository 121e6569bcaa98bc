use serde::{Deserialize, Serialize};

use super::task::Dataset;

/// Multinomial logistic regression: one row of `dim + 1` weights (bias
/// last) per class, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub n_classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub step_count: u64,
}

impl ModelState {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        Self {
            n_classes,
            dim,
            weights: vec![0.0; n_classes * (dim + 1)],
            step_count: 0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len()
    }

    fn row(&self, c: usize) -> &[f64] {
        let w = self.dim + 1;
        &self.weights[c * w..(c + 1) * w]
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (c, z) in out.iter_mut().enumerate() {
            let row = self.row(c);
            *z = row[..self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + row[self.dim];
        }
    }

    fn softmax_into(&self, x: &[f64], p: &mut [f64]) {
        self.logits_into(x, p);
        let m = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for z in p.iter_mut() {
            *z = (*z - m).exp();
            s += *z;
        }
        p.iter_mut().for_each(|z| *z /= s);
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut z = vec![0.0; self.n_classes];
        self.logits_into(x, &mut z);
        z.iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (c, v)| if *v > best.1 { (c, *v) } else { best },
            )
            .0
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        let hits = (0..data.len())
            .filter(|&i| self.predict(data.x(i)) == data.y(i))
            .count();
        hits as f64 / data.len() as f64
    }

    /// Mean cross-entropy gradient over `indices` (summed in the given order).
    pub fn gradient_on(&self, data: &Dataset, indices: &[usize]) -> Vec<f64> {
        let w = self.dim + 1;
        let mut grad = vec![0.0; self.n_params()];
        let mut p = vec![0.0; self.n_classes];
        for &i in indices {
            let x = data.x(i);
            self.softmax_into(x, &mut p);
            p[data.y(i)] -= 1.0;
            for (c, pc) in p.iter().enumerate() {
                let g = &mut grad[c * w..(c + 1) * w];
                for (gk, xk) in g[..self.dim].iter_mut().zip(x) {
                    *gk += pc * xk;
                }
                g[self.dim] += pc;
            }
        }
        let k = indices.len() as f64;
        grad.iter_mut().for_each(|g| *g /= k);
        grad
    }

    pub fn loss_on(&self, data: &Dataset, indices: &[usize]) -> f64 {
        let mut z = vec![0.0; self.n_classes];
        let mut total = 0.0;
        for &i in indices {
            self.logits_into(data.x(i), &mut z);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - z[data.y(i)];
        }
        total / indices.len() as f64
    }

    pub fn step(&mut self, grad: &[f64], learning_rate: f64) {
        for (w, g) in self.weights.iter_mut().zip(grad) {
            *w -= learning_rate * g;
        }
        self.step_count += 1;
    }
}

/// Full-data gradient of one center's mean cross-entropy.
pub fn exact_gradient(model: &ModelState, data: &Dataset) -> Vec<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    model.gradient_on(data, &all)
}

pub fn loss(model: &ModelState, data: &Dataset) -> f64 {
    let all: Vec<usize> = (0..data.len()).collect();
    model.loss_on(data, &all)
}
