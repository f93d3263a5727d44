use serde::{Deserialize, Serialize};

use super::grow::{grow_tree, GrowSpec, Growth};
use super::histogram::{build_histograms, BinnedMatrix};
use super::split::{BinStat, Gini};
use super::Tree;
use crate::dataset::{check_arity, Dataset};
use crate::error::{Error, Result};
use crate::resample::effective_weights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_weight_leaf: f64,
    pub n_bins: usize,
    pub class_weighting: bool,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            max_depth: None,
            min_samples_leaf: 1,
            min_weight_leaf: 0.0,
            n_bins: 255,
            class_weighting: false,
        }
    }
}

/// Single classification tree; leaves hold the weighted positive fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartModel {
    pub tree: Tree,
    pub params: CartParams,
    pub n_features: usize,
}

impl CartModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.tree.predict(x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_arity(x, self.n_features)?;
        Ok(self.predict_row(x))
    }
}

/// Per-row Gini statistics: `(w·y, w)` scaled by `multiplicity`.
pub(crate) fn gini_stats(data: &Dataset, weights: &[f64], multiplicity: Option<&[u32]>) -> (Vec<u32>, Vec<f64>, Vec<f64>) {
    let n = data.len();
    let mut rows = Vec::with_capacity(n);
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        let k = multiplicity.map_or(1, |m| m[i]);
        if k == 0 {
            continue;
        }
        rows.push(i as u32);
        b[i] = weights[i] * f64::from(k);
        a[i] = if data.labels()[i] == 1 { b[i] } else { 0.0 };
    }
    (rows, a, b)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn grow_gini(
    binned: &BinnedMatrix,
    rows: Vec<u32>,
    a: &[f64],
    b: &[f64],
    max_depth: Option<usize>,
    min_samples_leaf: usize,
    min_weight_leaf: f64,
    features: &mut dyn FnMut() -> Vec<usize>,
) -> Tree {
    let crit = Gini {
        min_child_weight: min_weight_leaf,
        min_rows: min_samples_leaf.max(1) as u32,
    };
    let spec = GrowSpec {
        crit: &crit,
        growth: Growth::LevelWise,
        max_depth,
        max_leaves: None,
    };
    let leaf = |s: &BinStat| if s.b > 0.0 { s.a / s.b } else { 0.0 };
    grow_tree(binned, rows, a, b, &spec, &leaf, features)
}

pub fn train_cart(data: &Dataset, params: &CartParams) -> Result<CartModel> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let binned = build_histograms(data, params.n_bins)?;
    let weights = effective_weights(data, params.class_weighting);
    let (rows, a, b) = gini_stats(data, &weights, None);
    let all: Vec<usize> = (0..data.n_features()).collect();
    let tree = grow_gini(
        &binned,
        rows,
        &a,
        &b,
        params.max_depth,
        params.min_samples_leaf,
        params.min_weight_leaf,
        &mut || all.clone(),
    );
    Ok(CartModel {
        tree,
        params: params.clone(),
        n_features: data.n_features(),
    })
}
