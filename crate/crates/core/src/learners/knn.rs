use serde::{Deserialize, Serialize};

use super::Scaler;
use crate::dataset::{check_arity, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    /// Weighted neighbours are not offered; requesting them is an error.
    pub class_weighting: bool,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams {
            k: 15,
            class_weighting: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub scaler: Scaler,
    pub k: usize,
    pub n_features: usize,
    /// Scaled training rows, row-major.
    pub points: Vec<f64>,
    pub labels: Vec<u8>,
}

impl KnnModel {
    /// Indices of the `k` nearest training rows to an already scaled query,
    /// nearest first; distance ties go to the lower index.
    pub fn neighbors(&self, z: &[f64]) -> Vec<usize> {
        let m = self.n_features;
        let mut d: Vec<(f64, usize)> = self
            .points
            .chunks(m.max(1))
            .enumerate()
            .map(|(i, p)| (p.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let z = self.scaler.transform_row(x);
        let nb = self.neighbors(&z);
        nb.iter().filter(|&&i| self.labels[i] == 1).count() as f64 / nb.len() as f64
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_arity(x, self.n_features)?;
        Ok(self.predict_row(x))
    }
}

pub fn train_knn(data: &Dataset, params: &KnnParams) -> Result<KnnModel> {
    if params.class_weighting {
        return Err(Error::Unsupported("weight adjustment is not available for knn".into()));
    }
    if params.k == 0 || params.k > data.len() {
        return Err(Error::invalid(format!("k = {} must lie in [1, {}]", params.k, data.len())));
    }
    let scaler = Scaler::fit(data)?;
    let dense = scaler.transform(data);
    Ok(KnnModel {
        scaler,
        k: params.k,
        n_features: data.n_features(),
        points: dense.rows().flat_map(|r| r.iter().copied()).collect(),
        labels: data.labels().to_vec(),
    })
}
