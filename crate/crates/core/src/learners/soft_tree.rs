use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_divergence, Adam, Scaler};
use crate::dataset::{check_arity, Dataset};
use crate::error::{Error, Result};
use crate::resample::effective_weights;
use crate::trees::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    /// Leaf distributions averaged by path probability.
    AveragePath,
    /// Distribution of the single most probable leaf.
    MaxPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftTreeParams {
    pub depth: usize,
    /// Inverse temperature of the gates.
    pub beta: f64,
    /// Balance penalty at the root; halves with each level.
    pub balance: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub inference: InferenceMode,
    pub class_weighting: bool,
    pub seed: u64,
}

impl Default for SoftTreeParams {
    fn default() -> Self {
        SoftTreeParams {
            depth: 8,
            beta: 1.0,
            balance: 0.1,
            learning_rate: 1e-2,
            batch_size: 256,
            epochs: 20,
            inference: InferenceMode::AveragePath,
            class_weighting: false,
            seed: 0,
        }
    }
}

/// Shape of a soft tree over `m` inputs. Inner nodes use heap order
/// (children of `i` are `2i+1` left and `2i+2` right); each holds `m`
/// weights and a bias. Leaves hold two class logits each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoftTreeShape {
    pub depth: usize,
    pub n_inputs: usize,
}

impl SoftTreeShape {
    pub fn n_inner(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn n_leaves(&self) -> usize {
        1 << self.depth
    }

    pub fn n_params(&self) -> usize {
        self.n_inner() * (self.n_inputs + 1) + 2 * self.n_leaves()
    }

    fn leaf_offset(&self) -> usize {
        self.n_inner() * (self.n_inputs + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftTreeModel {
    pub scaler: Scaler,
    pub shape: SoftTreeShape,
    pub beta: f64,
    pub weights: Vec<f64>,
    pub inference: InferenceMode,
    pub params: SoftTreeParams,
}

/// Right-branch probability of every inner node and the reach
/// probability of every node (inner then leaves, heap order).
fn gates(shape: &SoftTreeShape, beta: f64, theta: &[f64], x: &[f64], s: &mut [f64], reach: &mut [f64]) {
    let m = shape.n_inputs;
    reach[0] = 1.0;
    for i in 0..shape.n_inner() {
        let w = &theta[i * (m + 1)..(i + 1) * (m + 1)];
        let z = w[m] + w[..m].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        s[i] = sigmoid(beta * z);
        reach[2 * i + 1] = reach[i] * (1.0 - s[i]);
        reach[2 * i + 2] = reach[i] * s[i];
    }
}

/// Log-softmax of a leaf's two logits.
fn leaf_log_probs(theta: &[f64], shape: &SoftTreeShape, leaf: usize) -> [f64; 2] {
    let off = shape.leaf_offset() + 2 * leaf;
    let (a, b) = (theta[off], theta[off + 1]);
    let mx = a.max(b);
    let lse = mx + ((a - mx).exp() + (b - mx).exp()).ln();
    [a - lse, b - lse]
}

fn depth_of(i: usize) -> i32 {
    (usize::BITS - (i + 1).leading_zeros() - 1) as i32
}

/// Path-weighted cross-entropy plus the gate balance penalty over `rows`,
/// and its gradient. `data` must be dense.
pub fn soft_tree_objective(
    shape: &SoftTreeShape,
    beta: f64,
    balance: f64,
    theta: &[f64],
    data: &Dataset,
    weights: &[f64],
    rows: &[usize],
) -> (f64, Vec<f64>) {
    let m = shape.n_inputs;
    let n_inner = shape.n_inner();
    let n_nodes = n_inner + shape.n_leaves();
    let mut grad = vec![0.0; theta.len()];
    let w_sum: f64 = rows.iter().map(|&r| weights[r]).sum();
    let leaf_lp: Vec<[f64; 2]> = (0..shape.n_leaves()).map(|l| leaf_log_probs(theta, shape, l)).collect();

    let mut s_all = vec![0.0; rows.len() * n_inner];
    let mut p_all = vec![0.0; rows.len() * n_nodes];
    let mut num = vec![0.0; n_inner];
    let mut den = vec![0.0; n_inner];
    let mut loss = 0.0;
    for (k, &r) in rows.iter().enumerate() {
        let s = &mut s_all[k * n_inner..(k + 1) * n_inner];
        let p = &mut p_all[k * n_nodes..(k + 1) * n_nodes];
        gates(shape, beta, theta, data.row(r), s, p);
        let w = weights[r];
        for i in 0..n_inner {
            num[i] += w * p[i] * s[i];
            den[i] += w * p[i];
        }
        let y = data.labels()[r] as usize;
        for (l, lp) in leaf_lp.iter().enumerate() {
            loss -= w / w_sum * p[n_inner + l] * lp[y];
        }
    }
    // balance penalty -λ_d·½(log α + log(1-α)); kappa = dC/dα / D
    let mut alpha = vec![0.5; n_inner];
    let mut kappa = vec![0.0; n_inner];
    for i in 0..n_inner {
        if den[i] <= 0.0 {
            continue;
        }
        let a = (num[i] / den[i]).clamp(1e-12, 1.0 - 1e-12);
        let lam = balance * 0.5f64.powi(depth_of(i));
        alpha[i] = a;
        loss -= lam * 0.5 * (a.ln() + (1.0 - a).ln());
        kappa[i] = -lam * 0.5 * (1.0 / a - 1.0 / (1.0 - a)) / den[i];
    }

    let mut g = vec![0.0; n_nodes];
    let lo = shape.leaf_offset();
    for (k, &r) in rows.iter().enumerate() {
        let s = &s_all[k * n_inner..(k + 1) * n_inner];
        let p = &p_all[k * n_nodes..(k + 1) * n_nodes];
        let x = data.row(r);
        let w = weights[r];
        let y = data.labels()[r] as usize;
        for (l, lp) in leaf_lp.iter().enumerate() {
            let pl = p[n_inner + l];
            g[n_inner + l] = -w / w_sum * lp[y];
            for c in 0..2 {
                let q = lp[c].exp();
                let target = if c == y { 1.0 } else { 0.0 };
                grad[lo + 2 * l + c] += w / w_sum * pl * (q - target);
            }
        }
        for i in (0..n_inner).rev() {
            let (gl, gr) = (g[2 * i + 1], g[2 * i + 2]);
            g[i] = kappa[i] * w * (s[i] - alpha[i]) + s[i] * gr + (1.0 - s[i]) * gl;
            let ds = kappa[i] * w * p[i] + p[i] * (gr - gl);
            let dz = ds * s[i] * (1.0 - s[i]) * beta;
            let gw = &mut grad[i * (m + 1)..(i + 1) * (m + 1)];
            for j in 0..m {
                gw[j] += dz * x[j];
            }
            gw[m] += dz;
        }
    }
    (loss, grad)
}

impl SoftTreeModel {
    pub fn n_features(&self) -> usize {
        self.shape.n_inputs
    }

    /// Reach probability of each leaf for a raw input.
    pub fn leaf_probabilities(&self, x: &[f64]) -> Vec<f64> {
        let z = self.scaler.transform_row(x);
        let n_inner = self.shape.n_inner();
        let mut s = vec![0.0; n_inner];
        let mut p = vec![0.0; n_inner + self.shape.n_leaves()];
        gates(&self.shape, self.beta, &self.weights, &z, &mut s, &mut p);
        p.split_off(n_inner)
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let p = self.leaf_probabilities(x);
        let q = |l: usize| leaf_log_probs(&self.weights, &self.shape, l)[1].exp();
        match self.inference {
            InferenceMode::AveragePath => p.iter().enumerate().map(|(l, pl)| pl * q(l)).sum(),
            InferenceMode::MaxPath => {
                let best = (0..p.len()).fold(0, |b, l| if p[l] > p[b] { l } else { b });
                q(best)
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_arity(x, self.n_features())?;
        Ok(self.predict_row(x))
    }
}

pub(crate) fn init_soft_tree(shape: &SoftTreeShape, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 0.1).expect("positive std");
    let mut theta: Vec<f64> = (0..shape.leaf_offset()).map(|_| normal.sample(rng)).collect();
    theta.extend(std::iter::repeat_n(0.0, 2 * shape.n_leaves()));
    theta
}

pub fn train_soft_tree(data: &Dataset, params: &SoftTreeParams) -> Result<SoftTreeModel> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if params.depth == 0 || params.depth > 16 || params.batch_size == 0 {
        return Err(Error::invalid("soft tree depth must lie in [1, 16] and batch_size be positive"));
    }
    let scaler = Scaler::fit(data)?;
    let dense = scaler.transform(data);
    let weights = effective_weights(data, params.class_weighting);
    let shape = SoftTreeShape {
        depth: params.depth,
        n_inputs: data.n_features(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut theta = init_soft_tree(&shape, &mut rng);
    let mut opt = Adam::new(theta.len(), params.learning_rate);
    let mut order: Vec<usize> = (0..dense.len()).collect();
    let mut initial = None;
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(params.batch_size) {
            let (loss, grad) = soft_tree_objective(&shape, params.beta, params.balance, &theta, &dense, &weights, batch);
            opt.step(&mut theta, &grad);
            epoch_loss += loss * batch.len() as f64;
        }
        epoch_loss /= order.len() as f64;
        let start = *initial.get_or_insert(epoch_loss);
        log::debug!("soft tree epoch {epoch}: loss {epoch_loss:.5}");
        check_divergence("soft_tree", epoch, epoch_loss, start)?;
    }
    Ok(SoftTreeModel {
        scaler,
        shape,
        beta: params.beta,
        weights: theta,
        inference: params.inference,
        params: params.clone(),
    })
}
