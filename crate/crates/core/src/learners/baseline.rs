use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{f1_score, metrics_from_labels, Metrics};

/// Coin-flip selection: realised metrics plus their expectations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub base_rate: f64,
    pub expected_precision: f64,
    pub expected_recall: f64,
    pub expected_f1: f64,
    pub empirical: Metrics,
}

/// Expected (precision, recall, F1) of labelling each sample positive with
/// probability ½ when a fraction `base_rate` is positive.
pub fn expected_random_metrics(base_rate: f64) -> (f64, f64, f64) {
    (base_rate, 0.5, f1_score(base_rate, 0.5))
}

pub fn random_baseline(labels: &[u8], seed: u64) -> Result<RandomBaseline> {
    if labels.is_empty() {
        return Err(Error::invalid("random baseline needs labels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let predicted: Vec<u8> = labels.iter().map(|_| u8::from(rng.random_bool(0.5))).collect();
    let base_rate = labels.iter().filter(|&&y| y == 1).count() as f64 / labels.len() as f64;
    let (p, r, f) = expected_random_metrics(base_rate);
    Ok(RandomBaseline {
        base_rate,
        expected_precision: p,
        expected_recall: r,
        expected_f1: f,
        empirical: metrics_from_labels(&predicted, labels, 0.5)?,
    })
}
