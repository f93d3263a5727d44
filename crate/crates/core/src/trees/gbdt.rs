use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grow::{grow_tree, GrowSpec, Growth};
use super::histogram::build_histograms;
use super::split::SplitParams;
use super::Tree;
use crate::dataset::{check_arity, Dataset};
use crate::error::{Error, Result};
use crate::resample::effective_weights;

/// Gradient-based one-side sampling rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goss {
    pub top_rate: f64,
    pub other_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub max_leaves: Option<usize>,
    pub growth: Growth,
    pub learning_rate: f64,
    pub lambda_l2: f64,
    pub gamma_min_gain: f64,
    pub min_child_weight: f64,
    pub n_bins: usize,
    pub goss: Option<Goss>,
    pub class_weighting: bool,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_estimators: 100,
            max_depth: Some(6),
            max_leaves: None,
            growth: Growth::LevelWise,
            learning_rate: 0.1,
            lambda_l2: 1.0,
            gamma_min_gain: 0.0,
            min_child_weight: 1.0,
            n_bins: 255,
            goss: None,
            class_weighting: false,
            seed: 0,
        }
    }
}

impl BoostParams {
    /// Depth-limited level-wise preset.
    pub fn xgboost() -> Self {
        BoostParams {
            n_estimators: 180,
            max_depth: Some(11),
            ..Default::default()
        }
    }

    /// Leaf-wise preset with a leaf budget.
    pub fn lightgbm() -> Self {
        BoostParams {
            n_estimators: 355,
            max_depth: Some(8),
            max_leaves: Some(31),
            growth: Growth::LeafWise,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid(format!("learning_rate {} outside (0, 1]", self.learning_rate)));
        }
        if self.lambda_l2 < 0.0 || self.gamma_min_gain < 0.0 || self.min_child_weight < 0.0 {
            return Err(Error::invalid("lambda_l2, gamma_min_gain and min_child_weight must be >= 0"));
        }
        if let Some(g) = self.goss {
            let ok = g.top_rate > 0.0 && g.other_rate > 0.0 && g.top_rate + g.other_rate <= 1.0;
            if !ok {
                return Err(Error::invalid(format!(
                    "goss rates ({}, {}) must be positive with a + b <= 1",
                    g.top_rate, g.other_rate
                )));
            }
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Boosted ensemble; trees hold raw Newton leaf values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub growth: Growth,
    pub params: BoostParams,
    pub n_features: usize,
}

impl Ensemble {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Probability for a row whose arity is already checked.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_arity(x, self.n_features)?;
        Ok(self.predict_row(x))
    }
}

/// Weighted mean binary cross-entropy.
pub fn weighted_log_loss(data: &Dataset, probs: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&y, &w), &p) in data.labels().iter().zip(data.weights()).zip(probs) {
        let p = p.clamp(1e-15, 1.0 - 1e-15);
        num += -w * if y == 1 { p.ln() } else { (1.0 - p).ln() };
        den += w;
    }
    num / den
}

const RATE_CLAMP: f64 = 1e-7;

fn goss_rows(grad: &mut [f64], hess: &mut [f64], goss: Goss, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let n = grad.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&i, &j| grad[j as usize].abs().total_cmp(&grad[i as usize].abs()).then(i.cmp(&j)));
    let n_top = ((goss.top_rate * n as f64).round() as usize).min(n);
    let rest = &order[n_top..];
    let n_other = ((goss.other_rate * n as f64).round() as usize).min(rest.len());
    let scale = (1.0 - goss.top_rate) / goss.other_rate;
    let mut rows: Vec<u32> = order[..n_top].to_vec();
    for k in sample(rng, rest.len(), n_other) {
        let r = rest[k];
        grad[r as usize] *= scale;
        hess[r as usize] *= scale;
        rows.push(r);
    }
    rows.sort_unstable();
    rows
}

/// Fits a boosted ensemble under logistic loss.
pub fn train_gbdt(data: &Dataset, params: &BoostParams) -> Result<Ensemble> {
    params.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let n = data.len();
    let w = effective_weights(data, params.class_weighting);
    let y: Vec<f64> = data.labels().iter().map(|&v| f64::from(v)).collect();
    let w_sum: f64 = w.iter().sum();
    let rate = (w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / w_sum).clamp(RATE_CLAMP, 1.0 - RATE_CLAMP);
    let base_score = (rate / (1.0 - rate)).ln();
    let mut ensemble = Ensemble {
        trees: Vec::new(),
        learning_rate: params.learning_rate,
        base_score,
        growth: params.growth,
        params: params.clone(),
        n_features: data.n_features(),
    };
    let positives = data.positives();
    if positives == 0 || positives == n {
        log::warn!("single-class training data, returning base score only");
        return Ok(ensemble);
    }
    let binned = build_histograms(data, params.n_bins)?;
    let crit = SplitParams {
        lambda: params.lambda_l2,
        gamma: params.gamma_min_gain,
        min_child_weight: params.min_child_weight,
    };
    let spec = GrowSpec {
        crit: &crit,
        growth: params.growth,
        max_depth: params.max_depth,
        max_leaves: params.max_leaves,
    };
    let lambda = params.lambda_l2;
    let leaf = move |s: &super::BinStat| -s.a / (s.b + lambda);
    let all_features: Vec<usize> = (0..data.n_features()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut margin = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for round in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = w[i] * (p - y[i]);
            hess[i] = w[i] * p * (1.0 - p);
        }
        let rows = match params.goss {
            Some(g) => goss_rows(&mut grad, &mut hess, g, &mut rng),
            None => (0..n as u32).collect(),
        };
        let tree = grow_tree(&binned, rows, &grad, &hess, &spec, &leaf, &mut || all_features.clone());
        for (i, m) in margin.iter_mut().enumerate() {
            *m += params.learning_rate * tree.predict(data.row(i));
        }
        log::debug!("round {round}: {} leaves", tree.n_leaves());
        ensemble.trees.push(tree);
    }
    Ok(ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::Node;

    fn separable() -> Dataset {
        let mut d = Dataset::new(vec!["a".into(), "b".into()]);
        for i in 0..40 {
            let x = i as f64;
            let label = u8::from(x + (i % 7) as f64 > 25.0);
            d.push_row(&[x, (i % 7) as f64], label, 1.0).unwrap();
        }
        d
    }

    fn probs(e: &Ensemble, d: &Dataset) -> Vec<f64> {
        d.rows().map(|r| e.predict_row(r)).collect()
    }

    #[test]
    fn loss_decreases_each_round() {
        let d = separable();
        let mut prev = f64::INFINITY;
        for k in 0..8 {
            let p = BoostParams { n_estimators: k, max_depth: Some(2), min_child_weight: 0.0, ..Default::default() };
            let loss = weighted_log_loss(&d, &probs(&train_gbdt(&d, &p).unwrap(), &d));
            assert!(loss < prev, "round {k}: {loss} >= {prev}");
            prev = loss;
        }
    }

    #[test]
    fn single_class_gives_base_only() {
        let mut d = Dataset::new(vec!["a".into()]);
        for i in 0..5 {
            d.push_row(&[i as f64], 1, 1.0).unwrap();
        }
        let e = train_gbdt(&d, &BoostParams::default()).unwrap();
        assert!(e.trees.is_empty());
        assert!(e.predict(&[0.0]).unwrap() > 0.999);
        assert!(e.predict(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn missing_rows_follow_positive_side() {
        let mut d = Dataset::new(vec!["a".into()]);
        for i in 0..20 {
            d.push_row(&[i as f64], u8::from(i >= 10), 1.0).unwrap();
        }
        for _ in 0..6 {
            d.push_row(&[f64::NAN], 1, 1.0).unwrap();
        }
        let p = BoostParams { n_estimators: 1, max_depth: Some(1), min_child_weight: 0.0, ..Default::default() };
        let e = train_gbdt(&d, &p).unwrap();
        match &e.trees[0].nodes[0] {
            Node::Split { default_left, threshold, .. } => {
                assert_eq!(*threshold, 10.0);
                assert!(!default_left);
            }
            Node::Leaf { .. } => panic!("expected a split"),
        }
        assert!(e.predict(&[f64::NAN]).unwrap() > e.predict(&[0.0]).unwrap());
    }

    #[test]
    fn goss_is_seeded() {
        let d = separable();
        let p = BoostParams {
            n_estimators: 5,
            goss: Some(Goss { top_rate: 0.2, other_rate: 0.3 }),
            min_child_weight: 0.0,
            seed: 9,
            ..Default::default()
        };
        let a = train_gbdt(&d, &p).unwrap();
        let b = train_gbdt(&d, &p).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let bad = BoostParams { goss: Some(Goss { top_rate: 0.7, other_rate: 0.5 }), ..p };
        assert!(train_gbdt(&d, &bad).is_err());
    }

    #[test]
    fn goss_scales_sampled_rows() {
        let mut g: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut h = vec![1.0; 10];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = goss_rows(&mut g, &mut h, Goss { top_rate: 0.2, other_rate: 0.4 }, &mut rng);
        assert_eq!(rows.len(), 6);
        assert!(rows.contains(&9) && rows.contains(&8));
        for &r in &rows {
            if r < 8 {
                assert_eq!(h[r as usize], 2.0);
            }
        }
    }
}
