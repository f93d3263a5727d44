//! Class-imbalance handling: inverse-frequency weights and SMOTE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{is_missing, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImbalanceStrategy {
    #[default]
    None,
    Smote,
    #[serde(alias = "weight")]
    WeightAdjust,
}

impl ImbalanceStrategy {
    pub fn label(self) -> &'static str {
        match self {
            ImbalanceStrategy::None => "baseline",
            ImbalanceStrategy::Smote => "smote",
            ImbalanceStrategy::WeightAdjust => "weight",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalancePlan {
    pub strategy: ImbalanceStrategy,
    pub k_neighbors: usize,
    pub seed: u64,
}

impl Default for ImbalancePlan {
    fn default() -> Self {
        ImbalancePlan {
            strategy: ImbalanceStrategy::None,
            k_neighbors: 5,
            seed: 0,
        }
    }
}

/// `n_total / (2 n_class)` for the positive and negative class.
pub fn class_weights(labels: &[u8]) -> Result<(f64, f64)> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = n - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::invalid("class weights need both classes present"));
    }
    Ok((n / (2.0 * pos), n / (2.0 * neg)))
}

/// Row weights of `data`, multiplied by the class weight of each row's
/// label when `class_weighting` is set and both classes are present.
pub fn effective_weights(data: &Dataset, class_weighting: bool) -> Vec<f64> {
    let mut w = data.weights().to_vec();
    if class_weighting {
        if let Ok((wp, wn)) = class_weights(data.labels()) {
            for (wi, &y) in w.iter_mut().zip(data.labels()) {
                *wi *= if y == 1 { wp } else { wn };
            }
        }
    }
    w
}

/// Copy of `data` with every row weighted by its class weight.
pub fn apply_class_weights(data: &Dataset) -> Result<Dataset> {
    let (wp, wn) = class_weights(data.labels())?;
    let mut out = data.clone();
    let weights = data
        .labels()
        .iter()
        .map(|&y| if y == 1 { wp } else { wn })
        .collect();
    out.set_weights(weights)?;
    Ok(out)
}

pub(crate) fn median_of(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Per-column medians of present values; all-missing columns get 0.
pub fn column_medians(data: &Dataset) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::invalid("cannot impute an empty dataset"));
    }
    Ok((0..data.n_features())
        .map(|j| {
            let mut present: Vec<f64> = data.column(j).into_iter().filter(|v| !is_missing(*v)).collect();
            median_of(&mut present).unwrap_or_else(|| {
                log::warn!("column {} is entirely missing; imputing 0", data.feature_names()[j]);
                0.0
            })
        })
        .collect())
}

/// Fills missing cells with `medians`, typically fitted on training data.
pub fn apply_imputation(data: &Dataset, medians: &[f64]) -> Result<Dataset> {
    if medians.len() != data.n_features() {
        return Err(Error::invalid("imputation vector arity mismatch"));
    }
    let mut out = data.clone();
    let m = medians.len();
    for (k, v) in out.values_mut().iter_mut().enumerate() {
        if is_missing(*v) {
            *v = medians[k % m];
        }
    }
    Ok(out)
}

pub fn impute_median(data: &Dataset) -> Result<(Dataset, Vec<f64>)> {
    let medians = column_medians(data)?;
    Ok((apply_imputation(data, &medians)?, medians))
}

/// Per-column mean and standard deviation (0 replaced by 1).
pub(crate) fn standardizer(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let m = data.n_features();
    let n = data.len().max(1) as f64;
    let mut mean = vec![0.0; m];
    for row in data.rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; m];
    for row in data.rows() {
        for j in 0..m {
            var[j] += (row[j] - mean[j]).powi(2);
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

/// The `k` nearest other points of each query, ties broken by index.
fn nearest_neighbors(points: &[Vec<f64>], queries: &[usize], k: usize) -> Vec<Vec<usize>> {
    queries
        .par_iter()
        .map(|&q| {
            let x = &points[q];
            // sorted ascending by (distance, index), at most k long
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for (i, p) in points.iter().enumerate() {
                if i == q {
                    continue;
                }
                let bound = if best.len() == k { best[k - 1].0 } else { f64::INFINITY };
                let mut d = 0.0;
                for (a, b) in x.iter().zip(p) {
                    d += (a - b) * (a - b);
                    if d > bound {
                        break;
                    }
                }
                if d > bound {
                    continue;
                }
                let key = (d, i);
                let pos = best.partition_point(|e| (e.0, e.1) < key);
                if pos < k {
                    best.insert(pos, key);
                    best.truncate(k);
                }
            }
            best.into_iter().map(|(_, i)| i).collect()
        })
        .collect()
}

/// Grows the minority class to the majority count by interpolating
/// between minority rows and their k nearest minority neighbours
/// (Euclidean on z-scored features). Original rows come first.
pub fn smote(data: &Dataset, plan: &ImbalancePlan) -> Result<Dataset> {
    if data.has_missing() {
        return Err(Error::invalid("smote requires imputed data without missing cells"));
    }
    let k = plan.k_neighbors;
    if k == 0 {
        return Err(Error::invalid("k_neighbors must be at least 1"));
    }
    let pos = data.positives();
    let neg = data.len() - pos;
    if pos == neg {
        return Ok(data.clone());
    }
    let minority_label = u8::from(pos < neg);
    let minority: Vec<usize> = (0..data.len())
        .filter(|&i| data.labels()[i] == minority_label)
        .collect();
    if minority.len() < k + 1 {
        return Err(Error::invalid(format!(
            "smote needs at least {} minority rows, found {}",
            k + 1,
            minority.len()
        )));
    }
    let n_new = pos.max(neg) - minority.len();
    let (mean, std) = standardizer(data);
    let z: Vec<Vec<f64>> = minority
        .iter()
        .map(|&i| {
            data.row(i)
                .iter()
                .enumerate()
                .map(|(j, v)| (v - mean[j]) / std[j])
                .collect()
        })
        .collect();
    let queries: Vec<usize> = (0..minority.len().min(n_new)).collect();
    let neighbors = nearest_neighbors(&z, &queries, k);

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut out = data.clone();
    let mut synthetic = vec![0.0; data.n_features()];
    for s in 0..n_new {
        let base = s % minority.len();
        let nn = neighbors[base][rng.random_range(0..neighbors[base].len())];
        let u: f64 = rng.random();
        let (a, b) = (data.row(minority[base]), data.row(minority[nn]));
        for j in 0..synthetic.len() {
            let v = a[j] + u * (b[j] - a[j]);
            synthetic[j] = v.clamp(a[j].min(b[j]), a[j].max(b[j]));
        }
        out.push_row(&synthetic, minority_label, data.weights()[minority[base]])?;
    }
    Ok(out)
}
