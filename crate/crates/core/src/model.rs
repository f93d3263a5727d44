//! Uniform train/predict surface over every model family, and the
//! versioned JSON model file.

use std::fmt;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{check_arity, is_missing, Dataset};
use crate::error::{Error, Result};
use crate::resample::{apply_imputation, column_medians, smote, ImbalancePlan, ImbalanceStrategy};
use crate::learners::{
    train_knn, train_logreg, train_mlp, train_soft_tree, KnnModel, KnnParams, LogRegModel, LogRegParams, MlpModel,
    MlpParams, SoftTreeModel, SoftTreeParams,
};
use crate::trees::{
    train_cart, train_forest, train_gbdt, BoostParams, CartModel, CartParams, Ensemble, Forest, ForestParams, Growth,
    MaxFeatures, Tree,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "logreg")]
    LogReg,
    #[serde(rename = "knn")]
    Knn,
    #[serde(rename = "cart")]
    Cart,
    #[serde(rename = "forest")]
    Forest,
    #[serde(rename = "gbdt-xgb")]
    GbdtXgb,
    #[serde(rename = "gbdt-lgbm")]
    GbdtLgbm,
    #[serde(rename = "softtree")]
    SoftTree,
    #[serde(rename = "mlp")]
    Mlp,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::LogReg,
        Family::Knn,
        Family::Cart,
        Family::Forest,
        Family::GbdtXgb,
        Family::GbdtLgbm,
        Family::SoftTree,
        Family::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::LogReg => "logreg",
            Family::Knn => "knn",
            Family::Cart => "cart",
            Family::Forest => "forest",
            Family::GbdtXgb => "gbdt-xgb",
            Family::GbdtLgbm => "gbdt-lgbm",
            Family::SoftTree => "softtree",
            Family::Mlp => "mlp",
        }
    }

    pub fn is_tree(self) -> bool {
        matches!(self, Family::Cart | Family::Forest | Family::GbdtXgb | Family::GbdtLgbm)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model family '{s}'")))
    }
}

/// Family plus hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params")]
pub enum ModelSpec {
    #[serde(rename = "logreg")]
    LogReg(LogRegParams),
    #[serde(rename = "knn")]
    Knn(KnnParams),
    #[serde(rename = "cart")]
    Cart(CartParams),
    #[serde(rename = "forest")]
    Forest(ForestParams),
    #[serde(rename = "gbdt-xgb")]
    GbdtXgb(BoostParams),
    #[serde(rename = "gbdt-lgbm")]
    GbdtLgbm(BoostParams),
    #[serde(rename = "softtree")]
    SoftTree(SoftTreeParams),
    #[serde(rename = "mlp")]
    Mlp(MlpParams),
}

fn as_count(name: &str, v: f64) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::invalid(format!("{name} must be a non-negative integer, got {v}")));
    }
    Ok(v as usize)
}

/// Depth-like values where 0 means unlimited.
fn as_cap(name: &str, v: f64) -> Result<Option<usize>> {
    Ok(Some(as_count(name, v)?).filter(|&c| c > 0))
}

fn as_flag(v: f64) -> bool {
    v != 0.0
}

fn unknown(family: Family, name: &str) -> Error {
    Error::invalid(format!("{family} has no parameter '{name}'"))
}

impl ModelSpec {
    pub fn preset(family: Family) -> ModelSpec {
        match family {
            Family::LogReg => ModelSpec::LogReg(LogRegParams::default()),
            Family::Knn => ModelSpec::Knn(KnnParams::default()),
            Family::Cart => ModelSpec::Cart(CartParams::default()),
            Family::Forest => ModelSpec::Forest(ForestParams::default()),
            Family::GbdtXgb => ModelSpec::GbdtXgb(BoostParams::xgboost()),
            Family::GbdtLgbm => ModelSpec::GbdtLgbm(BoostParams::lightgbm()),
            Family::SoftTree => ModelSpec::SoftTree(SoftTreeParams::default()),
            Family::Mlp => ModelSpec::Mlp(MlpParams::default()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ModelSpec::LogReg(_) => Family::LogReg,
            ModelSpec::Knn(_) => Family::Knn,
            ModelSpec::Cart(_) => Family::Cart,
            ModelSpec::Forest(_) => Family::Forest,
            ModelSpec::GbdtXgb(_) => Family::GbdtXgb,
            ModelSpec::GbdtLgbm(_) => Family::GbdtLgbm,
            ModelSpec::SoftTree(_) => Family::SoftTree,
            ModelSpec::Mlp(_) => Family::Mlp,
        }
    }

    pub fn set_class_weighting(&mut self, on: bool) -> Result<()> {
        match self {
            ModelSpec::LogReg(p) => p.class_weighting = on,
            ModelSpec::Knn(p) => {
                if on {
                    return Err(Error::Unsupported("weight adjustment is not available for knn".into()));
                }
                p.class_weighting = false;
            }
            ModelSpec::Cart(p) => p.class_weighting = on,
            ModelSpec::Forest(p) => p.class_weighting = on,
            ModelSpec::GbdtXgb(p) | ModelSpec::GbdtLgbm(p) => p.class_weighting = on,
            ModelSpec::SoftTree(p) => p.class_weighting = on,
            ModelSpec::Mlp(p) => p.class_weighting = on,
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ModelSpec::Forest(p) => p.seed = seed,
            ModelSpec::GbdtXgb(p) | ModelSpec::GbdtLgbm(p) => p.seed = seed,
            ModelSpec::SoftTree(p) => p.seed = seed,
            ModelSpec::Mlp(p) => p.seed = seed,
            ModelSpec::LogReg(_) | ModelSpec::Knn(_) | ModelSpec::Cart(_) => {}
        }
    }

    /// Overrides one numeric hyperparameter by name. Caps such as
    /// `max_depth` treat 0 as unlimited; flags treat nonzero as on.
    pub fn set(&mut self, name: &str, v: f64) -> Result<()> {
        let family = self.family();
        match self {
            ModelSpec::LogReg(p) => match name {
                "l2" => p.l2 = v,
                "epochs" => p.epochs = as_count(name, v)?,
                "learning_rate" => p.learning_rate = v,
                "tolerance" => p.tolerance = v,
                _ => return Err(unknown(family, name)),
            },
            ModelSpec::Knn(p) => match name {
                "k" => p.k = as_count(name, v)?,
                _ => return Err(unknown(family, name)),
            },
            ModelSpec::Cart(p) => match name {
                "max_depth" => p.max_depth = as_cap(name, v)?,
                "min_samples_leaf" => p.min_samples_leaf = as_count(name, v)?,
                "min_weight_leaf" => p.min_weight_leaf = v,
                "n_bins" => p.n_bins = as_count(name, v)?,
                _ => return Err(unknown(family, name)),
            },
            ModelSpec::Forest(p) => match name {
                "n_estimators" => p.n_estimators = as_count(name, v)?,
                "max_depth" => p.max_depth = as_cap(name, v)?,
                "min_samples_leaf" => p.min_samples_leaf = as_count(name, v)?,
                "max_features" => {
                    p.max_features = match as_count(name, v)? {
                        0 => MaxFeatures::Sqrt,
                        k => MaxFeatures::Count(k),
                    }
                }
                "bootstrap" => p.bootstrap = as_flag(v),
                "n_bins" => p.n_bins = as_count(name, v)?,
                _ => return Err(unknown(family, name)),
            },
            ModelSpec::GbdtXgb(p) | ModelSpec::GbdtLgbm(p) => match name {
                "n_estimators" => p.n_estimators = as_count(name, v)?,
                "max_depth" => p.max_depth = as_cap(name, v)?,
                "max_leaves" => p.max_leaves = as_cap(name, v)?,
                "leaf_wise" => p.growth = if as_flag(v) { Growth::LeafWise } else { Growth::LevelWise },
                "learning_rate" => p.learning_rate = v,
                "lambda_l2" => p.lambda_l2 = v,
                "gamma_min_gain" => p.gamma_min_gain = v,
                "min_child_weight" => p.min_child_weight = v,
                "n_bins" => p.n_bins = as_count(name, v)?,
                "goss_top_rate" | "goss_other_rate" => {
                    let mut g = p.goss.unwrap_or(crate::trees::Goss { top_rate: 0.2, other_rate: 0.1 });
                    if name == "goss_top_rate" {
                        g.top_rate = v;
                    } else {
                        g.other_rate = v;
                    }
                    p.goss = Some(g);
                }
                _ => return Err(unknown(family, name)),
            },
            ModelSpec::SoftTree(p) => match name {
                "depth" => p.depth = as_count(name, v)?,
                "beta" => p.beta = v,
                "balance" => p.balance = v,
                "learning_rate" => p.learning_rate = v,
                "batch_size" => p.batch_size = as_count(name, v)?,
                "epochs" => p.epochs = as_count(name, v)?,
                _ => return Err(unknown(family, name)),
            },
            ModelSpec::Mlp(p) => match name {
                "dropout" => p.dropout = v,
                "learning_rate" => p.learning_rate = v,
                "batch_size" => p.batch_size = as_count(name, v)?,
                "epochs" => p.epochs = as_count(name, v)?,
                "hidden_width" => {
                    let w = as_count(name, v)?;
                    p.hidden.iter_mut().for_each(|h| *h = w);
                }
                _ => return Err(unknown(family, name)),
            },
        }
        Ok(())
    }

    pub fn train(&self, data: &Dataset) -> Result<Model> {
        Ok(match self {
            ModelSpec::LogReg(p) => Model::LogReg(train_logreg(data, p)?),
            ModelSpec::Knn(p) => Model::Knn(train_knn(data, p)?),
            ModelSpec::Cart(p) => Model::Cart(train_cart(data, p)?),
            ModelSpec::Forest(p) => Model::Forest(train_forest(data, p)?),
            ModelSpec::GbdtXgb(p) | ModelSpec::GbdtLgbm(p) => Model::Gbdt(train_gbdt(data, p)?),
            ModelSpec::SoftTree(p) => Model::SoftTree(train_soft_tree(data, p)?),
            ModelSpec::Mlp(p) => Model::Mlp(train_mlp(data, p)?),
        })
    }
}

/// A trained model of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum Model {
    Gbdt(Ensemble),
    Cart(CartModel),
    Forest(Forest),
    LogReg(LogRegModel),
    Knn(KnnModel),
    Mlp(MlpModel),
    SoftTree(SoftTreeModel),
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Model::Gbdt(m) => m.n_features,
            Model::Cart(m) => m.n_features,
            Model::Forest(m) => m.n_features,
            Model::LogReg(m) => m.n_features(),
            Model::Knn(m) => m.n_features,
            Model::Mlp(m) => m.n_features(),
            Model::SoftTree(m) => m.n_features(),
        }
    }

    /// Success probability of a row whose arity is already checked.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            Model::Gbdt(m) => m.predict_row(x),
            Model::Cart(m) => m.predict_row(x),
            Model::Forest(m) => m.predict_row(x),
            Model::LogReg(m) => m.predict_row(x),
            Model::Knn(m) => m.predict_row(x),
            Model::Mlp(m) => m.predict_row(x),
            Model::SoftTree(m) => m.predict_row(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_arity(x, self.n_features())?;
        Ok(self.predict_row(x))
    }

    /// Probabilities for every row, in row order.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.n_features() != self.n_features() {
            return Err(Error::invalid(format!(
                "model expects {} features, dataset has {}",
                self.n_features(),
                data.n_features()
            )));
        }
        let n = data.len();
        Ok((0..n).into_par_iter().map(|i| self.predict_row(data.row(i))).collect())
    }

    /// Trees of a tree-based model.
    pub fn trees(&self) -> Option<&[Tree]> {
        match self {
            Model::Gbdt(m) => Some(&m.trees),
            Model::Cart(m) => Some(std::slice::from_ref(&m.tree)),
            Model::Forest(m) => Some(&m.trees),
            _ => None,
        }
    }

    pub fn as_ensemble(&self) -> Option<&Ensemble> {
        match self {
            Model::Gbdt(e) => Some(e),
            _ => None,
        }
    }
}

/// On-disk model: the trained model plus the context needed to use it
/// safely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub family: Family,
    pub strategy: String,
    pub feature_names: Vec<String>,
    /// Latest label-window end seen in training.
    pub label_horizon: Option<NaiveDate>,
    pub spec: ModelSpec,
    pub model: Model,
    /// Column medians applied to inputs before prediction, when training
    /// needed complete rows.
    #[serde(default)]
    pub imputation: Option<Vec<f64>>,
}

impl ModelFile {
    /// Trains `spec` on `data` under the imbalance `plan`. Weight adjustment
    /// turns on class weighting; SMOTE imputes column medians first and
    /// keeps them for prediction.
    pub fn fit(spec: &ModelSpec, data: &Dataset, plan: &ImbalancePlan, label_horizon: Option<NaiveDate>) -> Result<ModelFile> {
        let mut spec = spec.clone();
        let (model, imputation) = match plan.strategy {
            ImbalanceStrategy::None => (spec.train(data)?, None),
            ImbalanceStrategy::WeightAdjust => {
                spec.set_class_weighting(true)?;
                (spec.train(data)?, None)
            }
            ImbalanceStrategy::Smote => {
                let medians = column_medians(data)?;
                let balanced = smote(&apply_imputation(data, &medians)?, plan)?;
                (spec.train(&balanced)?, Some(medians))
            }
        };
        let mut file = ModelFile::new(spec, model, plan.strategy.label(), data.feature_names().to_vec(), label_horizon);
        file.imputation = imputation;
        Ok(file)
    }

    /// Input row as the model sees it.
    pub fn prepare_row(&self, x: &[f64]) -> Vec<f64> {
        match &self.imputation {
            Some(m) => x
                .iter()
                .zip(m)
                .map(|(&v, &med)| if is_missing(v) { med } else { v })
                .collect(),
            None => x.to_vec(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.model.predict(&self.prepare_row(x))
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        match &self.imputation {
            Some(m) => self.model.predict_dataset(&apply_imputation(data, m)?),
            None => self.model.predict_dataset(data),
        }
    }

    pub fn new(spec: ModelSpec, model: Model, strategy: &str, feature_names: Vec<String>, label_horizon: Option<NaiveDate>) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            family: spec.family(),
            strategy: strategy.to_string(),
            feature_names,
            label_horizon,
            spec,
            model,
            imputation: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<ModelFile> {
        let f: ModelFile = serde_json::from_str(s)?;
        f.check_version()?;
        Ok(f)
    }

    fn check_version(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let f: ModelFile = serde_json::from_reader(BufReader::new(file))?;
        f.check_version()?;
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i as f64 * 0.3).sin(), if i % 7 == 0 { f64::NAN } else { (i % 5) as f64 }])
            .collect();
        let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] > 0.2)).collect();
        Dataset::from_rows(&rows, &labels).unwrap()
    }

    fn small(family: Family) -> ModelSpec {
        let mut s = ModelSpec::preset(family);
        let knobs: &[(&str, f64)] = match family {
            Family::GbdtXgb | Family::GbdtLgbm | Family::Forest => &[("n_estimators", 5.0)],
            Family::SoftTree => &[("depth", 3.0), ("epochs", 2.0)],
            Family::Mlp => &[("epochs", 2.0), ("hidden_width", 8.0)],
            Family::Knn => &[("k", 5.0)],
            Family::LogReg => &[("epochs", 20.0)],
            Family::Cart => &[],
        };
        for (k, v) in knobs {
            s.set(k, *v).unwrap();
        }
        s
    }

    #[test]
    fn every_family_round_trips_bit_exactly() {
        let d = data();
        for family in Family::ALL {
            let spec = small(family);
            let model = spec.train(&d).unwrap();
            let file = ModelFile::new(spec, model, "none", d.feature_names().to_vec(), None);
            let json = file.to_json().unwrap();
            let back = ModelFile::from_json(&json).unwrap();
            assert_eq!(back, file, "{family}");
            assert_eq!(back.to_json().unwrap(), json);
            for x in d.rows() {
                let (a, b) = (file.model.predict(x).unwrap(), back.model.predict(x).unwrap());
                assert_eq!(a.to_bits(), b.to_bits());
                assert!((0.0..=1.0).contains(&a) && a.is_finite(), "{family}: {a}");
            }
            assert!(file.model.predict(&[0.0]).is_err());
        }
    }

    #[test]
    fn names_and_overrides() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!("svm".parse::<Family>().is_err());
        let mut s = ModelSpec::preset(Family::GbdtXgb);
        s.set("max_depth", 0.0).unwrap();
        assert!(matches!(&s, ModelSpec::GbdtXgb(p) if p.max_depth.is_none() && p.n_estimators == 180));
        assert!(s.set("k", 3.0).is_err());
        assert!(s.set("n_estimators", 2.5).is_err());
        let mut k = ModelSpec::preset(Family::Knn);
        assert!(matches!(k.set_class_weighting(true), Err(Error::Unsupported(_))));
    }
}
