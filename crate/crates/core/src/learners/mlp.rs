use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{bce_logit, check_divergence, Adam, Scaler};
use crate::dataset::{check_arity, Dataset};
use crate::error::{Error, Result};
use crate::resample::effective_weights;
use crate::trees::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub class_weighting: bool,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![64, 64],
            dropout: 0.1,
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 20,
            class_weighting: false,
            seed: 0,
        }
    }
}

/// Feed-forward network with ReLU hidden layers and a logistic output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub scaler: Scaler,
    /// Layer widths, input first, output (1) last.
    pub sizes: Vec<usize>,
    /// Per layer: weights (out × in, row-major) then biases.
    pub weights: Vec<f64>,
    pub params: MlpParams,
}

fn n_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

/// Output logit; `masks` (already divided by the keep rate) apply to
/// hidden layers when given. Fills per-layer activations for backprop.
fn forward(sizes: &[usize], theta: &[f64], x: &[f64], masks: Option<&[Vec<f64>]>, acts: &mut Vec<Vec<f64>>) -> f64 {
    acts.clear();
    acts.push(x.to_vec());
    let n_layers = sizes.len() - 1;
    let mut off = 0;
    for l in 0..n_layers {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = &theta[off..off + n_in * n_out];
        let b = &theta[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let prev = &acts[l];
        let mut out: Vec<f64> = (0..n_out)
            .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(prev).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        if l + 1 < n_layers {
            for (k, v) in out.iter_mut().enumerate() {
                *v = v.max(0.0);
                if let Some(m) = masks {
                    *v *= m[l][k];
                }
            }
        }
        acts.push(out);
    }
    acts[n_layers][0]
}

fn objective(
    sizes: &[usize],
    theta: &[f64],
    data: &Dataset,
    weights: &[f64],
    rows: &[usize],
    mut dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> (f64, Vec<f64>) {
    let n_layers = sizes.len() - 1;
    let mut grad = vec![0.0; theta.len()];
    let w_sum: f64 = rows.iter().map(|&r| weights[r]).sum();
    let mut loss = 0.0;
    let mut acts = Vec::new();
    let mut masks: Vec<Vec<f64>> = sizes[1..n_layers].iter().map(|&h| vec![1.0; h]).collect();
    let offsets: Vec<usize> = sizes
        .windows(2)
        .scan(0, |acc, w| {
            let o = *acc;
            *acc += w[0] * w[1] + w[1];
            Some(o)
        })
        .collect();
    for &r in rows {
        if let Some((rate, rng)) = dropout.as_mut() {
            let keep = 1.0 - *rate;
            for m in masks.iter_mut().flatten() {
                *m = if rng.random::<f64>() < *rate { 0.0 } else { 1.0 / keep };
            }
        }
        let y = f64::from(data.labels()[r]);
        let scale = weights[r] / w_sum;
        let z = forward(sizes, theta, data.row(r), Some(&masks), &mut acts);
        loss += scale * bce_logit(z, y);
        let mut delta = vec![scale * (sigmoid(z) - y)];
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let off = offsets[l];
            let prev = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    let g = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    for (gi, a) in g.iter_mut().zip(prev) {
                        *gi += d * a;
                    }
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &theta[off..off + n_in * n_out];
            let mut back = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (bi, wi) in back.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *bi += d * wi;
                    }
                }
            }
            // through ReLU and the dropout mask of hidden layer l-1
            for (k, bk) in back.iter_mut().enumerate() {
                *bk = if prev[k] > 0.0 { *bk * masks[l - 1][k] } else { 0.0 };
            }
            delta = back;
        }
    }
    (loss, grad)
}

/// Weighted mean cross-entropy over `rows` (dense data, no dropout) and its
/// gradient with respect to the flat parameter vector.
pub fn mlp_objective(sizes: &[usize], theta: &[f64], data: &Dataset, weights: &[f64], rows: &[usize]) -> (f64, Vec<f64>) {
    objective(sizes, theta, data, weights, rows, None)
}

impl MlpModel {
    pub fn n_features(&self) -> usize {
        self.sizes[0]
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let z = self.scaler.transform_row(x);
        let mut acts = Vec::new();
        sigmoid(forward(&self.sizes, &self.weights, &z, None, &mut acts))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_arity(x, self.n_features())?;
        Ok(self.predict_row(x))
    }
}

pub(crate) fn init_weights(sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut theta = Vec::with_capacity(n_params(sizes));
    for w in sizes.windows(2) {
        let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
        theta.extend((0..w[0] * w[1]).map(|_| normal.sample(rng)));
        theta.extend(std::iter::repeat_n(0.0, w[1]));
    }
    theta
}

pub fn train_mlp(data: &Dataset, params: &MlpParams) -> Result<MlpModel> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if !(0.0..1.0).contains(&params.dropout) || params.batch_size == 0 {
        return Err(Error::invalid("dropout must lie in [0, 1) and batch_size be positive"));
    }
    let scaler = Scaler::fit(data)?;
    let dense = scaler.transform(data);
    let weights = effective_weights(data, params.class_weighting);
    let mut sizes = vec![data.n_features()];
    sizes.extend(&params.hidden);
    sizes.push(1);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut theta = init_weights(&sizes, &mut rng);
    let mut opt = Adam::new(theta.len(), params.learning_rate);
    let mut order: Vec<usize> = (0..dense.len()).collect();
    let initial = mlp_objective(&sizes, &theta, &dense, &weights, &order).0;
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(params.batch_size) {
            let (loss, grad) = objective(&sizes, &theta, &dense, &weights, batch, Some((params.dropout, &mut rng)));
            opt.step(&mut theta, &grad);
            epoch_loss += loss * batch.len() as f64;
        }
        epoch_loss /= order.len() as f64;
        log::debug!("mlp epoch {epoch}: loss {epoch_loss:.5}");
        check_divergence("mlp", epoch, epoch_loss, initial)?;
    }
    Ok(MlpModel {
        scaler,
        sizes,
        weights: theta,
        params: params.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_differences() {
        let rows: Vec<Vec<f64>> = (0..16).map(|i| vec![(i as f64 * 0.9).sin(), (i as f64 * 0.4).cos(), 0.1 * i as f64]).collect();
        let labels: Vec<u8> = (0..16).map(|i| u8::from(i % 2 == 0)).collect();
        let d = Dataset::from_rows(&rows, &labels).unwrap();
        let w: Vec<f64> = (0..16).map(|i| 1.0 + (i % 3) as f64).collect();
        let sizes = [3, 5, 4, 1];
        let theta = init_weights(&sizes, &mut ChaCha8Rng::seed_from_u64(2));
        let idx: Vec<usize> = (0..16).collect();
        let (_, g) = mlp_objective(&sizes, &theta, &d, &w, &idx);
        let mut worst: f64 = 0.0;
        for k in (0..theta.len()).step_by(3) {
            let h = 1e-6;
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[k] += h;
            b[k] -= h;
            let fd = (mlp_objective(&sizes, &a, &d, &w, &idx).0 - mlp_objective(&sizes, &b, &d, &w, &idx).0) / (2.0 * h);
            worst = worst.max((fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-4));
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn learns_xor() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let a = (i % 2) as f64;
            let b = ((i / 2) % 2) as f64;
            let jitter = ((i as f64) * 0.37).fract() * 0.2;
            rows.push(vec![a + jitter, b - jitter]);
            labels.push(u8::from(a != b));
        }
        let d = Dataset::from_rows(&rows, &labels).unwrap();
        let p = MlpParams { epochs: 60, learning_rate: 1e-2, batch_size: 32, ..Default::default() };
        let m = train_mlp(&d, &p).unwrap();
        let correct = d.rows().zip(&labels).filter(|(x, &y)| u8::from(m.predict_row(x) >= 0.5) == y).count();
        assert!(correct as f64 / 200.0 > 0.95, "{correct}");
        let x = [0.3, 0.8];
        assert_eq!(m.predict(&x).unwrap().to_bits(), m.predict(&x).unwrap().to_bits());
    }
}
