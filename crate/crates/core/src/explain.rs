//! Factor importance and per-prediction Shapley attributions for tree
//! models, with an exhaustive oracle.

use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::check_arity;
use crate::error::{Error, Result};
use crate::features::{compute_features, Factor, FeatureConfig, N_FACTORS};
use crate::ingest::EntityStore;
use crate::model::{Model, ModelFile};
use crate::trees::{sigmoid, Node, Tree};

/// Attribution in the model's additive output space: log-odds for the
/// boosted ensemble, probability for CART and the forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub base_value: f64,
    pub phi: Vec<f64>,
    pub model_output: f64,
}

impl Attribution {
    /// `|base + Σφ − output|`.
    pub fn local_accuracy_gap(&self) -> f64 {
        (self.base_value + self.phi.iter().sum::<f64>() - self.model_output).abs()
    }
}

/// A tree model viewed as `offset + scale·Σ trees`.
struct Additive<'a> {
    trees: &'a [Tree],
    scale: f64,
    offset: f64,
    logistic: bool,
    n_features: usize,
}

fn additive(model: &Model) -> Result<Additive<'_>> {
    match model {
        Model::Gbdt(e) => Ok(Additive {
            trees: &e.trees,
            scale: e.learning_rate,
            offset: e.base_score,
            logistic: true,
            n_features: e.n_features,
        }),
        Model::Cart(c) => Ok(Additive {
            trees: std::slice::from_ref(&c.tree),
            scale: 1.0,
            offset: 0.0,
            logistic: false,
            n_features: c.n_features,
        }),
        Model::Forest(f) => Ok(Additive {
            trees: &f.trees,
            scale: 1.0 / f.trees.len().max(1) as f64,
            offset: 0.0,
            logistic: false,
            n_features: f.n_features,
        }),
        _ => Err(Error::Unsupported("attributions are only available for tree models".into())),
    }
}

impl Additive<'_> {
    fn output(&self, x: &[f64]) -> f64 {
        self.offset + self.scale * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

/// Sum of split gains per feature.
pub fn gain_importance(model: &Model) -> Result<Vec<f64>> {
    let trees = model
        .trees()
        .ok_or_else(|| Error::Unsupported("gain importance needs a tree model".into()))?;
    let mut out = vec![0.0; model.n_features()];
    for t in trees {
        t.accumulate_gain(&mut out);
    }
    Ok(out)
}

fn child_ratio(tree: &Tree, parent: usize, child: usize) -> f64 {
    let pc = tree.nodes[parent].cover();
    if pc > 0.0 {
        tree.nodes[child].cover() / pc
    } else {
        0.5
    }
}

/// (hot child, cold child) of a split for input `x`.
fn hot_cold(node: &Node, x: &[f64]) -> (usize, usize) {
    match *node {
        Node::Split {
            feature,
            threshold,
            default_left,
            left,
            right,
            ..
        } => {
            let next = Tree::next(x, feature, threshold, default_left, left, right);
            if next == left {
                (left, right)
            } else {
                (right, left)
            }
        }
        Node::Leaf { .. } => unreachable!("leaf has no children"),
    }
}

#[derive(Clone, Copy)]
struct PathElem {
    feature: usize,
    zero: f64,
    one: f64,
    weight: f64,
}

const ROOT: usize = usize::MAX;

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: usize) {
    let l = path.len();
    path.push(PathElem {
        feature,
        zero,
        one,
        weight: if l == 0 { 1.0 } else { 0.0 },
    });
    let lf = (l + 1) as f64;
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / lf;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / lf;
    }
}

fn unwind(path: &mut Vec<PathElem>, i: usize) {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let lf = (l + 1) as f64;
    let mut n = path[l].weight;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = path[j].weight;
            path[j].weight = n * lf / ((j + 1) as f64 * one);
            n = t - path[j].weight * zero * (l - j) as f64 / lf;
        } else {
            path[j].weight = path[j].weight * lf / (zero * (l - j) as f64);
        }
    }
    for j in i..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero = path[j + 1].zero;
        path[j].one = path[j + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElem], i: usize) -> f64 {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let lf = (l + 1) as f64;
    let mut n = path[l].weight;
    let mut total = 0.0;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = n * lf / ((j + 1) as f64 * one);
            total += t;
            n = path[j].weight - t * zero * (l - j) as f64 / lf;
        } else {
            total += path[j].weight * lf / (zero * (l - j) as f64);
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn recurse(tree: &Tree, x: &[f64], j: usize, mut path: Vec<PathElem>, zero: f64, one: f64, feature: usize, phi: &mut [f64], scale: f64) {
    extend(&mut path, zero, one, feature);
    match &tree.nodes[j] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                phi[e.feature] += scale * w * (e.one - e.zero) * value;
            }
        }
        node @ Node::Split { feature: f, .. } => {
            let (hot, cold) = hot_cold(node, x);
            let (mut iz, mut io) = (1.0, 1.0);
            if let Some(k) = path.iter().skip(1).position(|e| e.feature == *f).map(|k| k + 1) {
                iz = path[k].zero;
                io = path[k].one;
                unwind(&mut path, k);
            }
            let (rh, rc) = (child_ratio(tree, j, hot), child_ratio(tree, j, cold));
            recurse(tree, x, hot, path.clone(), iz * rh, io, *f, phi, scale);
            recurse(tree, x, cold, path, iz * rc, 0.0, *f, phi, scale);
        }
    }
}

/// Cover-weighted expectation of a tree with features in `known` fixed to
/// `x` and the rest integrated out.
fn conditional_expectation(tree: &Tree, x: &[f64], j: usize, known: &dyn Fn(usize) -> bool) -> f64 {
    match &tree.nodes[j] {
        Node::Leaf { value, .. } => *value,
        node @ Node::Split { feature, left, right, .. } => {
            if known(*feature) {
                let (hot, _) = hot_cold(node, x);
                conditional_expectation(tree, x, hot, known)
            } else {
                child_ratio(tree, j, *left) * conditional_expectation(tree, x, *left, known)
                    + child_ratio(tree, j, *right) * conditional_expectation(tree, x, *right, known)
            }
        }
    }
}

/// Polynomial-time path-dependent Shapley values.
pub fn tree_shap(model: &Model, x: &[f64]) -> Result<Attribution> {
    let a = additive(model)?;
    check_arity(x, a.n_features)?;
    let mut phi = vec![0.0; a.n_features];
    let mut base_value = a.offset;
    for t in a.trees {
        base_value += a.scale * conditional_expectation(t, x, 0, &|_| false);
        recurse(t, x, 0, Vec::with_capacity(t.depth() + 2), 1.0, 1.0, ROOT, &mut phi, a.scale);
    }
    Ok(Attribution {
        base_value,
        phi,
        model_output: a.output(x),
    })
}

/// Most distinct features a tree may use in the exhaustive oracle.
pub const BRUTEFORCE_MAX_FEATURES: usize = 12;

/// Exact Shapley values by enumerating every subset of each tree's
/// features.
pub fn shapley_bruteforce(model: &Model, x: &[f64]) -> Result<Attribution> {
    let a = additive(model)?;
    check_arity(x, a.n_features)?;
    let mut phi = vec![0.0; a.n_features];
    let mut base_value = a.offset;
    for t in a.trees {
        let used = t.features_used();
        let m = used.len();
        if m > BRUTEFORCE_MAX_FEATURES {
            return Err(Error::invalid(format!(
                "tree uses {m} features; exhaustive Shapley allows at most {BRUTEFORCE_MAX_FEATURES}"
            )));
        }
        let value = |mask: usize| {
            conditional_expectation(t, x, 0, &|f| used.iter().position(|&u| u == f).is_some_and(|k| mask >> k & 1 == 1))
        };
        let v: Vec<f64> = (0..1usize << m).map(value).collect();
        base_value += a.scale * v[0];
        let fact: Vec<f64> = (0..=m).scan(1.0, |acc, k| {
            if k > 0 {
                *acc *= k as f64;
            }
            Some(*acc)
        }).collect();
        for (k, &f) in used.iter().enumerate() {
            let mut s = 0.0;
            for mask in 0..1usize << m {
                if mask >> k & 1 == 1 {
                    continue;
                }
                let size = mask.count_ones() as usize;
                let w = fact[size] * fact[m - size - 1] / fact[m];
                s += w * (v[mask | 1 << k] - v[mask]);
            }
            phi[f] += a.scale * s;
        }
    }
    Ok(Attribution {
        base_value,
        phi,
        model_output: a.output(x),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub factor: String,
    pub value: Option<f64>,
    pub phi: f64,
    pub direction: char,
}

/// One company's prediction broken down by factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub company_id: String,
    pub company_name: String,
    pub as_of: NaiveDate,
    pub base_value: f64,
    pub model_output: f64,
    pub probability: f64,
    /// Ordered by |phi| descending.
    pub rows: Vec<ReportRow>,
}

pub fn explain_report(store: &EntityStore, company_id: &str, as_of: NaiveDate, model: &ModelFile, cfg: &FeatureConfig) -> Result<ExplainReport> {
    let idx = store
        .company_idx(company_id)
        .ok_or_else(|| Error::invalid(format!("unknown company '{company_id}'")))?;
    let fv = compute_features(store, idx, as_of, cfg);
    let x = model.prepare_row(&fv.to_row());
    let attr = tree_shap(&model.model, &x)?;
    let logistic = additive(&model.model)?.logistic;
    let mut rows: Vec<ReportRow> = Factor::ALL
        .iter()
        .map(|&f| {
            let phi = attr.phi[f.index()];
            ReportRow {
                factor: f.name().to_string(),
                value: fv.get(f),
                phi,
                direction: if phi >= 0.0 { '+' } else { '-' },
            }
        })
        .collect();
    rows.sort_by(|a, b| b.phi.abs().total_cmp(&a.phi.abs()));
    debug_assert_eq!(rows.len(), N_FACTORS);
    let company = store.company(idx);
    Ok(ExplainReport {
        company_id: company.id.clone(),
        company_name: company.name.clone(),
        as_of,
        base_value: attr.base_value,
        model_output: attr.model_output,
        probability: if logistic { sigmoid(attr.model_output) } else { attr.model_output },
        rows,
    })
}

impl ExplainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("factor,value,phi,direction\n");
        for r in &self.rows {
            let v = r.value.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(out, "{},{},{},{}", r.factor, v, r.phi, r.direction);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} ({}) as of {}", self.company_name, self.company_id, self.as_of);
        let _ = writeln!(out, "base value {:.4}, output {:.4}, probability {:.4}", self.base_value, self.model_output, self.probability);
        for (label, sign) in [("pushing higher", '+'), ("pushing lower", '-')] {
            let _ = writeln!(out, "{label}:");
            for r in self.rows.iter().filter(|r| r.direction == sign && r.phi != 0.0) {
                let v = r.value.map_or("missing".to_string(), |v| format!("{v}"));
                let _ = writeln!(out, "  {:<28} {:>12}  {:+.4}", r.factor, v, r.phi);
            }
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "company_id": self.company_id,
            "as_of": self.as_of,
            "base_value": self.base_value,
            "model_output": self.model_output,
            "probability": self.probability,
        }))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{BoostParams, Ensemble, Growth};

    fn split(feature: usize, threshold: f64, left: usize, right: usize, cover: f64, gain: f64) -> Node {
        Node::Split {
            feature,
            threshold,
            default_left: true,
            left,
            right,
            gain,
            cover,
        }
    }

    fn leaf(value: f64, cover: f64) -> Node {
        Node::Leaf { value, cover }
    }

    fn ensemble(trees: Vec<Tree>, n_features: usize) -> Model {
        Model::Gbdt(Ensemble {
            trees,
            learning_rate: 1.0,
            base_score: 0.0,
            growth: Growth::LevelWise,
            params: BoostParams::default(),
            n_features,
        })
    }

    #[test]
    fn single_split_credits_one_feature() {
        let t = Tree { nodes: vec![split(3, 0.5, 1, 2, 4.0, 1.0), leaf(-1.0, 3.0), leaf(2.0, 1.0)] };
        let m = ensemble(vec![t], 5);
        let a = tree_shap(&m, &[0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((a.base_value - (-0.75 + 0.5)).abs() < 1e-12);
        assert!((a.phi[3] - (2.0 - a.base_value)).abs() < 1e-12);
        assert!(a.phi.iter().enumerate().all(|(i, p)| i == 3 || *p == 0.0));
        assert_eq!(gain_importance(&m).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn repeated_feature_matches_oracle() {
        let t = Tree {
            nodes: vec![
                split(0, 0.5, 1, 2, 10.0, 1.0),
                split(1, 0.5, 3, 4, 6.0, 1.0),
                split(0, 0.8, 5, 6, 4.0, 1.0),
                leaf(1.0, 2.0),
                leaf(-2.0, 4.0),
                leaf(0.5, 1.0),
                leaf(3.0, 3.0),
            ],
        };
        let m = ensemble(vec![t], 3);
        for x in [[0.9, 0.1, 0.0], [0.2, 0.7, 5.0], [f64::NAN, 0.7, 0.0], [0.6, f64::NAN, 1.0]] {
            let a = tree_shap(&m, &x).unwrap();
            let b = shapley_bruteforce(&m, &x).unwrap();
            assert!(a.local_accuracy_gap() < 1e-12);
            for k in 0..3 {
                assert!((a.phi[k] - b.phi[k]).abs() < 1e-12, "{x:?}: {:?} vs {:?}", a.phi, b.phi);
            }
            assert_eq!(a.phi[2], 0.0);
        }
    }

    #[test]
    fn symmetric_features_share_credit() {
        // f = 1 iff x0 >= 0.5 and x1 >= 0.5, with symmetric covers
        let t = Tree {
            nodes: vec![
                split(0, 0.5, 1, 2, 4.0, 1.0),
                leaf(0.0, 2.0),
                split(1, 0.5, 3, 4, 2.0, 1.0),
                leaf(0.0, 1.0),
                leaf(1.0, 1.0),
            ],
        };
        let m = ensemble(vec![t], 2);
        let a = shapley_bruteforce(&m, &[1.0, 1.0]).unwrap();
        assert!((a.phi[0] - a.phi[1]).abs() < 1e-12);
        assert!(tree_shap(&m, &[1.0]).is_err());
    }
}
