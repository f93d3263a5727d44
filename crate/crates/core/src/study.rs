//! Single- versus multiple-window training, compared window by window.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dates::format_date;
use crate::error::{Error, Result};
use crate::evaluate::metrics;
use crate::features::FeatureTable;
use crate::model::{ModelFile, ModelSpec};
use crate::resample::ImbalancePlan;
use crate::windows::{study_sets, StudyProtocol, WindowMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub window_index: usize,
    pub t_s: NaiveDate,
    pub t_f: NaiveDate,
    pub n_train_single: usize,
    pub n_train_multiple: usize,
    pub n_test: usize,
    pub f1_single: f64,
    pub f1_multiple: f64,
}

impl StudyRow {
    pub fn multiple_wins(&self) -> bool {
        self.f1_multiple >= self.f1_single
    }
}

fn f1_on(table: &FeatureTable, spec: &ModelSpec, plan: &ImbalancePlan, train: &[usize], test: &[usize], th: f64) -> Result<f64> {
    let train = table.data.subset(train);
    let test = table.data.subset(test);
    let file = ModelFile::fit(spec, &train, plan, None)?;
    let probs = file.predict_dataset(&test)?;
    Ok(metrics(&probs, test.labels(), th)?.f1)
}

/// F1 at `threshold` for every window with a test set, trained on the
/// single and the cumulative history. Out-of-sample starts at the second
/// window present. When both training sets coincide the model is fitted
/// once and both columns carry the same score.
pub fn windows_study(
    table: &FeatureTable,
    spec: &ModelSpec,
    plan: &ImbalancePlan,
    protocol: StudyProtocol,
    threshold: f64,
    split_seed: u64,
) -> Result<Vec<StudyRow>> {
    let windows: Vec<usize> = table.keys.iter().map(|k| k.window.index).collect();
    let mut present: Vec<_> = table.keys.iter().map(|k| k.window).collect();
    present.sort_by_key(|w| w.index);
    present.dedup_by_key(|w| w.index);
    if present.is_empty() {
        return Err(Error::invalid("windows study needs a non-empty feature table"));
    }
    let skip = usize::from(protocol == StudyProtocol::OutOfSample);
    let mut rows = Vec::new();
    for w in present.iter().skip(skip) {
        let single = study_sets(&windows, w.index, WindowMode::Single, protocol, split_seed)?;
        let multiple = study_sets(&windows, w.index, WindowMode::Multiple, protocol, split_seed)?;
        if single.train.is_empty() || single.test.is_empty() {
            log::warn!("window {} has no usable train/test split; skipped", w.index);
            continue;
        }
        let f1_single = f1_on(table, spec, plan, &single.train, &single.test, threshold)?;
        let f1_multiple = if multiple.train == single.train && multiple.test == single.test {
            f1_single
        } else {
            f1_on(table, spec, plan, &multiple.train, &multiple.test, threshold)?
        };
        log::info!("window {}: single {f1_single:.4} multiple {f1_multiple:.4}", w.index);
        rows.push(StudyRow {
            window_index: w.index,
            t_s: w.start,
            t_f: w.end,
            n_train_single: single.train.len(),
            n_train_multiple: multiple.train.len(),
            n_test: single.test.len(),
            f1_single,
            f1_multiple,
        });
    }
    Ok(rows)
}

pub fn write_study_csv(rows: &[StudyRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "window_index",
        "t_s",
        "t_f",
        "n_train_single",
        "n_train_multiple",
        "n_test",
        "f1_single",
        "f1_multiple",
    ])?;
    for r in rows {
        w.write_record([
            r.window_index.to_string(),
            format_date(r.t_s),
            format_date(r.t_f),
            r.n_train_single.to_string(),
            r.n_train_multiple.to_string(),
            r.n_test.to_string(),
            r.f1_single.to_string(),
            r.f1_multiple.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
