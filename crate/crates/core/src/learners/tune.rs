//! Seeded random search over a hyperparameter box.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluate::metrics;
use crate::model::{Family, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamRange {
    Int { lo: i64, hi: i64 },
    Float { lo: f64, hi: f64, log: bool },
    Choice { values: Vec<f64> },
}

impl ParamRange {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ParamRange::Int { lo, hi } => rng.random_range(*lo..=*hi) as f64,
            ParamRange::Float { lo, hi, log: false } => lo + (hi - lo) * rng.random::<f64>(),
            ParamRange::Float { lo, hi, log: true } => (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp(),
            ParamRange::Choice { values } => values[rng.random_range(0..values.len())],
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            ParamRange::Int { lo, hi } => lo <= hi,
            ParamRange::Float { lo, hi, log } => lo <= hi && (!log || *lo > 0.0),
            ParamRange::Choice { values } => !values.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("empty or invalid range for '{name}'")))
        }
    }
}

pub type ParamPoint = BTreeMap<String, f64>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: BTreeMap<String, ParamRange>,
}

impl SearchSpace {
    /// A modest default box for each family.
    pub fn default_for(family: Family) -> SearchSpace {
        use ParamRange::*;
        let entries: Vec<(&str, ParamRange)> = match family {
            Family::LogReg => vec![("l2", Float { lo: 1e-6, hi: 1e-1, log: true }), ("learning_rate", Float { lo: 1e-3, hi: 0.3, log: true })],
            Family::Knn => vec![("k", Int { lo: 1, hi: 101 })],
            Family::Cart => vec![("max_depth", Int { lo: 2, hi: 30 }), ("min_samples_leaf", Int { lo: 1, hi: 100 })],
            Family::Forest => vec![("n_estimators", Int { lo: 20, hi: 200 }), ("max_depth", Int { lo: 4, hi: 63 })],
            Family::GbdtXgb | Family::GbdtLgbm => vec![
                ("n_estimators", Int { lo: 50, hi: 400 }),
                ("max_depth", Int { lo: 3, hi: 12 }),
                ("learning_rate", Float { lo: 0.01, hi: 0.3, log: true }),
                ("lambda_l2", Float { lo: 1e-3, hi: 10.0, log: true }),
            ],
            Family::SoftTree => vec![("depth", Int { lo: 3, hi: 8 }), ("learning_rate", Float { lo: 1e-3, hi: 0.1, log: true })],
            Family::Mlp => vec![("learning_rate", Float { lo: 1e-4, hi: 1e-2, log: true }), ("dropout", Choice { values: vec![0.0, 0.1, 0.2] })],
        };
        SearchSpace {
            params: entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub point: ParamPoint,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: Trial,
    pub trials: Vec<Trial>,
}

/// Evaluates `warm_start` points first, then random points, `budget`
/// trials in total. The first trial reaching the best score wins.
pub fn random_search(
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    warm_start: &[ParamPoint],
    mut objective: impl FnMut(&ParamPoint) -> Result<f64>,
) -> Result<TuneResult> {
    if budget == 0 {
        return Err(Error::invalid("tuning budget must be at least 1"));
    }
    if warm_start.len() > budget {
        return Err(Error::invalid("more warm-start points than the budget"));
    }
    for (name, r) in &space.params {
        r.validate(name)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials: Vec<Trial> = Vec::with_capacity(budget);
    let mut best: Option<usize> = None;
    for index in 0..budget {
        let point = match warm_start.get(index) {
            Some(p) => p.clone(),
            None => space.params.iter().map(|(k, r)| (k.clone(), r.sample(&mut rng))).collect(),
        };
        let score = objective(&point)?;
        if score.is_nan() {
            return Err(Error::Numerical(format!("trial {index} scored NaN")));
        }
        log::info!("trial {index}: {score:.4} {point:?}");
        if best.is_none_or(|b| score > trials[b].score) {
            best = Some(index);
        }
        trials.push(Trial { index, point, score });
    }
    let best = trials[best.expect("budget >= 1")].clone();
    Ok(TuneResult { best, trials })
}

/// Applies a parameter point to a copy of `spec`.
pub fn apply_point(spec: &ModelSpec, point: &ParamPoint) -> Result<ModelSpec> {
    let mut s = spec.clone();
    for (k, v) in point {
        s.set(k, *v)?;
    }
    Ok(s)
}

/// Random search maximising validation F1 at threshold 0.5. Returns the
/// tuned spec and the trial log.
pub fn tune(
    spec: &ModelSpec,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    train: &Dataset,
    valid: &Dataset,
    warm_start: &[ParamPoint],
) -> Result<(ModelSpec, TuneResult)> {
    let result = random_search(space, budget, seed, warm_start, |point| {
        let s = apply_point(spec, point)?;
        let probs = s.train(train)?.predict_dataset(valid)?;
        Ok(metrics(&probs, valid.labels(), 0.5)?.f1)
    })?;
    Ok((apply_point(spec, &result.best.point)?, result))
}

pub fn write_trials_csv(result: &TuneResult, path: &Path) -> Result<()> {
    let names: Vec<String> = result
        .trials
        .first()
        .map(|t| t.point.keys().cloned().collect())
        .unwrap_or_default();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["trial".to_string()];
    header.extend(names.iter().cloned());
    header.push("f1".into());
    w.write_record(&header)?;
    for t in &result.trials {
        let mut rec = vec![t.index.to_string()];
        rec.extend(names.iter().map(|n| t.point.get(n).map_or(String::new(), |v| v.to_string())));
        rec.push(t.score.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(hi: f64) -> SearchSpace {
        SearchSpace {
            params: [("x".to_string(), ParamRange::Float { lo: 0.0, hi, log: false })].into(),
        }
    }

    fn score(p: &ParamPoint) -> Result<f64> {
        Ok(-(p["x"] - 3.0).powi(2))
    }

    #[test]
    fn budget_one_and_determinism() {
        let one = random_search(&space(1.0), 1, 7, &[], score).unwrap();
        assert_eq!(one.trials.len(), 1);
        assert_eq!(one.best, one.trials[0]);
        let a = random_search(&space(1.0), 10, 7, &[], score).unwrap();
        let b = random_search(&space(1.0), 10, 7, &[], score).unwrap();
        assert_eq!(a, b);
        assert!(random_search(&space(1.0), 0, 7, &[], score).is_err());
    }

    #[test]
    fn widened_space_with_warm_start_never_worse() {
        let narrow = random_search(&space(1.0), 8, 3, &[], score).unwrap();
        let warm: Vec<ParamPoint> = narrow.trials.iter().map(|t| t.point.clone()).collect();
        let wide = random_search(&space(10.0), 16, 3, &warm, score).unwrap();
        assert!(wide.best.score >= narrow.best.score);
    }
}
