use serde::{Deserialize, Serialize};

use super::{bce_logit, check_divergence, Adam, Scaler};
use crate::dataset::{check_arity, Dataset};
use crate::error::{Error, Result};
use crate::resample::effective_weights;
use crate::trees::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub tolerance: f64,
    pub class_weighting: bool,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            l2: 1e-4,
            epochs: 300,
            learning_rate: 0.05,
            tolerance: 1e-6,
            class_weighting: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub scaler: Scaler,
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub params: LogRegParams,
    /// Gradient norm at the final iterate.
    pub grad_norm: f64,
    pub epochs_run: usize,
}

impl LogRegModel {
    pub fn n_features(&self) -> usize {
        self.coef.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let z = self.scaler.transform_row(x);
        sigmoid(self.intercept + z.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_arity(x, self.n_features())?;
        Ok(self.predict_row(x))
    }
}

/// Weighted mean cross-entropy plus `½·l2·|coef|²` and its gradient.
/// `theta` holds the coefficients followed by the intercept; `data` must be
/// dense.
pub fn logreg_objective(theta: &[f64], data: &Dataset, weights: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let m = data.n_features();
    let mut grad = vec![0.0; m + 1];
    let mut loss = 0.0;
    let mut w_sum = 0.0;
    for (i, x) in data.rows().enumerate() {
        let w = weights[i];
        let y = f64::from(data.labels()[i]);
        let z = theta[m] + x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        loss += w * bce_logit(z, y);
        let d = w * (sigmoid(z) - y);
        for j in 0..m {
            grad[j] += d * x[j];
        }
        grad[m] += d;
        w_sum += w;
    }
    for g in &mut grad {
        *g /= w_sum;
    }
    loss /= w_sum;
    for j in 0..m {
        loss += 0.5 * l2 * theta[j] * theta[j];
        grad[j] += l2 * theta[j];
    }
    (loss, grad)
}

/// Full-batch Adam on the weighted logistic loss.
pub fn train_logreg(data: &Dataset, params: &LogRegParams) -> Result<LogRegModel> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let scaler = Scaler::fit(data)?;
    let dense = scaler.transform(data);
    let weights = effective_weights(data, params.class_weighting);
    let m = data.n_features();
    let mut theta = vec![0.0; m + 1];
    let mut opt = Adam::new(m + 1, params.learning_rate);
    let (initial, mut grad) = logreg_objective(&theta, &dense, &weights, params.l2);
    let mut epochs_run = 0;
    for epoch in 0..params.epochs {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < params.tolerance {
            break;
        }
        opt.step(&mut theta, &grad);
        let (loss, g) = logreg_objective(&theta, &dense, &weights, params.l2);
        check_divergence("logreg", epoch, loss, initial)?;
        grad = g;
        epochs_run = epoch + 1;
    }
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    log::info!("logreg: {epochs_run} epochs, gradient norm {grad_norm:.3e}");
    let intercept = theta.pop().expect("intercept");
    Ok(LogRegModel {
        scaler,
        coef: theta,
        intercept,
        params: params.clone(),
        grad_norm,
        epochs_run,
    })
}
