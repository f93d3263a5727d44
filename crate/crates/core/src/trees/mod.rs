//! Tree learners sharing one histogram split finder: a weighted-Gini
//! CART tree, a bagged random forest, and a second-order gradient-boosted
//! ensemble with learned default directions for missing values.

mod cart;
mod forest;
mod gbdt;
mod grow;
mod histogram;
mod split;

use serde::{Deserialize, Serialize};

pub use cart::{train_cart, CartModel, CartParams};
pub use forest::{train_forest, Forest, ForestParams, MaxFeatures};
pub use gbdt::{sigmoid, train_gbdt, weighted_log_loss, BoostParams, Ensemble, Goss};
pub use grow::Growth;
pub use histogram::{build_histograms, BinnedMatrix, MISSING_BIN};
pub use split::{best_split, split_gain, BinStat, SplitInfo, SplitParams};

use crate::dataset::is_missing;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left; missing values follow
    /// `default_left`.
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
        gain: f64,
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// Flat binary tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: f64) -> Tree {
        Tree {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    /// Child taken by `x` at a split node.
    #[inline]
    pub fn next(x: &[f64], feature: usize, threshold: f64, default_left: bool, left: usize, right: usize) -> usize {
        let v = x[feature];
        let go_left = if is_missing(v) { default_left } else { v < threshold };
        if go_left {
            left
        } else {
            right
        }
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => i = Tree::next(x, *feature, *threshold, *default_left, *left, *right),
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Sorted distinct split features.
    pub fn features_used(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Adds each split's gain to `out[feature]`.
    pub fn accumulate_gain(&self, out: &mut [f64]) {
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                out[*feature] += gain;
            }
        }
    }
}
