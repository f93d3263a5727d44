//! Run configuration: an optional TOML file merged under command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use startcast::features::{FeatureConfig, InvestorBasis};
use startcast::model::{Family, ModelSpec};
use startcast::resample::{ImbalancePlan, ImbalanceStrategy};

use crate::error::{CliError, CliResult};

/// Keys accepted in the run-config file. Flags given on the command line
/// win over file values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub model: Option<String>,
    pub strategy: Option<String>,
    pub threshold: Option<f64>,
    pub k_neighbors: Option<usize>,
    pub investor_basis: Option<InvestorBasis>,
    pub params: BTreeMap<String, f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read run config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("run config {}: {}", path.display(), one_line(&e.to_string()))))
    }
}

pub fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub const DEFAULT_SEED: u64 = 42;

/// Everything a subcommand needs after merging flags over the file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub seed: u64,
    /// Whether the seed came from a flag or the run config.
    #[serde(skip)]
    pub seed_explicit: bool,
    pub model: Option<Family>,
    pub strategy: ImbalanceStrategy,
    pub threshold: f64,
    pub k_neighbors: usize,
    pub features: FeatureConfig,
    pub params: BTreeMap<String, f64>,
}

pub struct Overrides<'a> {
    pub seed: Option<u64>,
    pub model: Option<&'a str>,
    pub strategy: Option<&'a str>,
    pub threshold: Option<f64>,
    pub params: &'a [String],
}

pub fn parse_strategy(s: &str) -> CliResult<ImbalanceStrategy> {
    match s {
        "none" => Ok(ImbalanceStrategy::None),
        "smote" => Ok(ImbalanceStrategy::Smote),
        "weight" => Ok(ImbalanceStrategy::WeightAdjust),
        other => Err(CliError::usage(format!("unknown strategy '{other}' (expected none, smote or weight)"))),
    }
}

fn parse_param(raw: &str) -> CliResult<(String, f64)> {
    let (k, v) = raw
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("parameter '{raw}' is not key=value")))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("parameter '{k}' needs a numeric value")))?;
    Ok((k.trim().to_string(), v))
}

impl Resolved {
    pub fn merge(file: &RunConfig, o: &Overrides) -> CliResult<Resolved> {
        let model = match o.model.map(str::to_string).or_else(|| file.model.clone()) {
            Some(m) => Some(m.parse::<Family>().map_err(|e| CliError::usage(e.to_string()))?),
            None => None,
        };
        let strategy = match o.strategy.map(str::to_string).or_else(|| file.strategy.clone()) {
            Some(s) => parse_strategy(&s)?,
            None => ImbalanceStrategy::None,
        };
        let threshold = o.threshold.or(file.threshold).unwrap_or(0.5);
        if !(0.0..=1.0).contains(&threshold) {
            return Err(CliError::usage(format!("threshold {threshold} is outside [0, 1]")));
        }
        let mut params = file.params.clone();
        for raw in o.params {
            let (k, v) = parse_param(raw)?;
            params.insert(k, v);
        }
        Ok(Resolved {
            seed: o.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            seed_explicit: o.seed.or(file.seed).is_some(),
            model,
            strategy,
            threshold,
            k_neighbors: file.k_neighbors.unwrap_or(5),
            features: FeatureConfig {
                investor_basis: file.investor_basis.unwrap_or_default(),
            },
            params,
        })
    }

    pub fn family(&self) -> CliResult<Family> {
        self.model.ok_or_else(|| CliError::usage("a model family is required (--model)"))
    }

    /// Preset for the family with the seed and parameter overrides applied.
    pub fn spec(&self) -> CliResult<ModelSpec> {
        let mut spec = ModelSpec::preset(self.family()?);
        spec.set_seed(self.seed);
        for (k, v) in &self.params {
            spec.set(k, *v).map_err(|e| CliError::usage(e.to_string()))?;
        }
        Ok(spec)
    }

    pub fn plan(&self) -> ImbalancePlan {
        ImbalancePlan {
            strategy: self.strategy,
            k_neighbors: self.k_neighbors,
            seed: self.seed,
        }
    }
}
