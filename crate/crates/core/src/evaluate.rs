//! Threshold classification, confusion metrics, ROC/AUC and rank correlation.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1` where `p >= th`.
pub fn classify(probs: &[f64], th: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= th)).collect()
}

/// Confusion counts and derived rates. Rates with a zero denominator are
/// reported as 0 and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub threshold: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub fpr_undefined: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize, threshold: f64) -> Metrics {
        let (precision, precision_undefined) = ratio(tp, tp + fp);
        let (recall, recall_undefined) = ratio(tp, tp + fn_);
        let (fpr, fpr_undefined) = ratio(fp, fp + tn);
        Metrics {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f1: f1_score(precision, recall),
            fpr,
            threshold,
            precision_undefined,
            recall_undefined,
            fpr_undefined,
        }
    }

    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Confusion metrics for hard predictions.
pub fn metrics_from_labels(predicted: &[u8], actual: &[u8], threshold: f64) -> Result<Metrics> {
    if predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("metrics need at least one sample"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in predicted.iter().zip(actual) {
        match (p == 1, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_, threshold))
}

/// Confusion metrics of `probs` thresholded at `th`.
pub fn metrics(probs: &[f64], actual: &[u8], th: f64) -> Result<Metrics> {
    metrics_from_labels(&classify(probs, th), actual, th)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC over every distinct score, highest first. The first point
/// (threshold +inf) is (0, 0) and the last reaches (1, 1).
pub fn roc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("non-empty");
        let p = RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(roc(scores, labels)?.auc)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("spearman needs two equal-length series of at least 2"));
    }
    Ok(pearson(&average_ranks(a), &average_ranks(b)))
}

/// One row of the model-comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub strategy: String,
    pub metrics: Metrics,
    pub auc: Option<f64>,
}

pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "strategy", "precision", "recall", "f1", "fpr", "auc", "tp", "fp", "tn", "fn"])?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.model.clone(),
            r.strategy.clone(),
            format!("{:.4}", m.precision),
            format!("{:.4}", m.recall),
            format!("{:.4}", m.f1),
            format!("{:.4}", m.fpr),
            r.auc.map_or(String::new(), |a| format!("{a:.4}")),
            m.tp.to_string(),
            m.fp.to_string(),
            m.tn.to_string(),
            m.fn_.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_roc_csv(curve: &RocCurve, path: &Path) -> Result<()> {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_inclusive() {
        assert_eq!(classify(&[0.5, 0.4999, 0.0], 0.5), vec![1, 0, 0]);
        assert_eq!(classify(&[0.5, 0.4999, 0.0], 0.0), vec![1, 1, 1]);
    }

    #[test]
    fn counts_and_flags() {
        let m = metrics_from_labels(&[1, 1, 0, 0], &[1, 0, 1, 0], 0.5).unwrap();
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (1, 1, 1, 1));
        assert_eq!(m.f1, 0.5);
        let none = metrics_from_labels(&[0, 0], &[1, 0], 0.5).unwrap();
        assert_eq!(none.recall, 0.0);
        assert!(none.precision_undefined);
        let perfect = metrics(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        assert_eq!((perfect.precision, perfect.recall, perfect.f1, perfect.fpr), (1.0, 1.0, 1.0, 0.0));
        assert!(metrics(&[], &[], 0.5).is_err());
        assert!((f1_score(0.2372, 0.5) - 0.3218).abs() < 1e-4);
    }

    #[test]
    fn roc_groups_ties() {
        let c = roc(&[0.9, 0.5, 0.5, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(c.points.len(), 4);
        assert_eq!(c.points.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
        assert!((c.auc - 0.875).abs() < 1e-12);
        assert_eq!(auc(&[0.9, 0.8, 0.2], &[1, 1, 0]).unwrap(), 1.0);
        assert!(roc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn spearman_handles_ties() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        let r = spearman(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(r > 0.9 && r < 1.0);
    }
}
