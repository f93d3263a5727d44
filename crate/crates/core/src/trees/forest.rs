use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{gini_stats, grow_gini};
use super::histogram::build_histograms;
use super::Tree;
use crate::dataset::{check_arity, Dataset};
use crate::error::{Error, Result};
use crate::resample::effective_weights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, m: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (m as f64).sqrt().floor() as usize,
            MaxFeatures::All => m,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, m.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub n_bins: usize,
    pub class_weighting: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 133,
            max_depth: Some(63),
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            n_bins: 255,
            class_weighting: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub n_features: usize,
}

impl Forest {
    /// Mean of the trees' leaf probabilities.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.5;
        }
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_arity(x, self.n_features)?;
        Ok(self.predict_row(x))
    }
}

pub fn train_forest(data: &Dataset, params: &ForestParams) -> Result<Forest> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if params.n_estimators == 0 {
        return Err(Error::invalid("forest needs at least one tree"));
    }
    let n = data.len();
    let m = data.n_features();
    let binned = build_histograms(data, params.n_bins)?;
    let weights = effective_weights(data, params.class_weighting);
    let k = params.max_features.resolve(m);
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let counts = params.bootstrap.then(|| {
                let mut c = vec![0u32; n];
                for _ in 0..n {
                    c[rng.random_range(0..n)] += 1;
                }
                c
            });
            let (rows, a, b) = gini_stats(data, &weights, counts.as_deref());
            let mut features = || {
                if k == m {
                    (0..m).collect()
                } else {
                    let mut f = sample(&mut rng, m, k).into_vec();
                    f.sort_unstable();
                    f
                }
            };
            grow_gini(&binned, rows, &a, &b, params.max_depth, params.min_samples_leaf, 0.0, &mut features)
        })
        .collect();
    Ok(Forest {
        trees,
        params: params.clone(),
        n_features: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{train_cart, CartParams};

    fn data() -> Dataset {
        let mut d = Dataset::new((0..4).map(|i| format!("f{i}")).collect());
        for i in 0..120 {
            let x = [(i * 7 % 31) as f64, (i % 5) as f64, (i * 13 % 17) as f64, if i % 9 == 0 { f64::NAN } else { (i % 11) as f64 }];
            let y = u8::from(x[0] + 2.0 * x[1] > 25.0 || i % 9 == 0);
            d.push_row(&x, y, 1.0).unwrap();
        }
        d
    }

    #[test]
    fn degenerate_forest_is_cart() {
        let d = data();
        let p = ForestParams {
            n_estimators: 1,
            max_depth: None,
            max_features: MaxFeatures::All,
            bootstrap: false,
            ..Default::default()
        };
        let f = train_forest(&d, &p).unwrap();
        let c = train_cart(&d, &CartParams::default()).unwrap();
        assert_eq!(f.trees[0], c.tree);
    }

    #[test]
    fn seeded_and_probabilistic() {
        let d = data();
        let p = ForestParams { n_estimators: 9, seed: 4, ..Default::default() };
        let a = train_forest(&d, &p).unwrap();
        let b = train_forest(&d, &p).unwrap();
        assert_eq!(a, b);
        let c = train_forest(&d, &ForestParams { seed: 5, ..p }).unwrap();
        assert_ne!(a, c);
        for x in d.rows() {
            let v = a.predict(x).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!(MaxFeatures::Sqrt.resolve(19), 4);
    }
}
