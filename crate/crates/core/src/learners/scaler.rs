use serde::{Deserialize, Serialize};

use crate::dataset::{is_missing, Dataset};
use crate::error::Result;
use crate::resample::{apply_imputation, column_medians, standardizer};

/// Train-median imputation followed by z-scoring with train statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub medians: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    pub fn fit(data: &Dataset) -> Result<Scaler> {
        let medians = column_medians(data)?;
        let imputed = apply_imputation(data, &medians)?;
        let (means, stds) = standardizer(&imputed);
        Ok(Scaler { medians, means, stds })
    }

    pub fn n_features(&self) -> usize {
        self.medians.len()
    }

    pub fn transform_row_into(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            let v = if is_missing(x[j]) { self.medians[j] } else { x[j] };
            out[j] = (v - self.means[j]) / self.stds[j];
        }
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.transform_row_into(x, &mut out);
        out
    }

    /// Dense scaled copy of `data`, same labels and weights.
    pub fn transform(&self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        let m = data.n_features();
        for row in out.values_mut().chunks_mut(m.max(1)) {
            let scaled = self.transform_row(row);
            row.copy_from_slice(&scaled);
        }
        out
    }
}
