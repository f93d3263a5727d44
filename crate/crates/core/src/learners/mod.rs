//! Dense baselines trained on median-imputed, z-scored input: logistic
//! regression, k-nearest neighbours, a two-hidden-layer perceptron and a
//! soft decision tree. Also the random-selection baseline and a seeded
//! random-search tuner.

mod baseline;
mod knn;
mod logreg;
mod mlp;
mod scaler;
mod soft_tree;
pub mod tune;

pub use baseline::{expected_random_metrics, random_baseline, RandomBaseline};
pub use knn::{train_knn, KnnModel, KnnParams};
pub use logreg::{logreg_objective, train_logreg, LogRegModel, LogRegParams};
pub use mlp::{mlp_objective, train_mlp, MlpModel, MlpParams};
pub use scaler::Scaler;
pub use soft_tree::{soft_tree_objective, train_soft_tree, InferenceMode, SoftTreeModel, SoftTreeParams, SoftTreeShape};

use crate::error::{Error, Result};

/// Numerically stable `log(1 + e^z)`.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Binary cross-entropy of logit `z` against label `y`.
pub(crate) fn bce_logit(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}

pub(crate) struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(n: usize, lr: f64) -> Adam {
        Adam {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Fails on a non-finite loss or one that grew past ten times its start.
pub(crate) fn check_divergence(model: &str, epoch: usize, loss: f64, initial: f64) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("{model}: non-finite loss at epoch {epoch}")));
    }
    if loss > 10.0 * initial {
        return Err(Error::Numerical(format!(
            "{model}: diverged at epoch {epoch} (loss {loss:.6} vs initial {initial:.6})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((bce_logit(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2));
    }
}
