//! Eighteen-month evaluation windows, eligibility, labels and splits.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dates::{end_of_month_after, format_date, parse_date, ymd};
use crate::error::{Error, Result};
use crate::ingest::{CompanyIdx, EntityStore};

pub const WINDOW_MONTHS: u32 = 18;
pub const N_WINDOWS: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub index: usize,
    /// Prediction moment `t_s`.
    pub start: NaiveDate,
    /// Inclusive horizon `t_f`.
    pub end: NaiveDate,
}

impl TimeWindow {
    /// Window that starts at `start` and ends on the last day of its 18th month.
    pub fn starting_at(index: usize, start: NaiveDate) -> TimeWindow {
        TimeWindow {
            index,
            start,
            end: end_of_month_after(start, WINDOW_MONTHS - 1),
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// The thirteen consecutive windows from 2000-01-01 to 2019-06-30.
pub fn window_schedule() -> Vec<TimeWindow> {
    let mut out = Vec::with_capacity(N_WINDOWS);
    let mut start = ymd(2000, 1, 1);
    for index in 0..N_WINDOWS {
        let w = TimeWindow::starting_at(index, start);
        start = w.end.succ_opt().expect("date in range");
        out.push(w);
    }
    out
}

/// Founded and funded strictly before `t_s`, and not acquired, public or
/// closed strictly before it.
pub fn eligible(store: &EntityStore, company: CompanyIdx, t_s: NaiveDate) -> bool {
    let c = store.company(company);
    let Some(founded) = c.founded else {
        return false;
    };
    if founded >= t_s || c.closed_before(t_s) {
        return false;
    }
    let funded = store
        .company_rounds(company)
        .next()
        .is_some_and(|r| r.announced < t_s);
    funded && !store.company_exits(company).any(|e| e.date < t_s)
}

/// 1 when a round, acquisition or IPO falls inside `[t_s, t_f]`.
pub fn label(store: &EntityStore, company: CompanyIdx, window: &TimeWindow) -> u8 {
    let hit = store
        .company_rounds(company)
        .any(|r| window.contains(r.announced))
        || store.company_exits(company).any(|e| window.contains(e.date));
    u8::from(hit)
}

/// One labelled (company, window) observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEvent {
    pub company: CompanyIdx,
    pub company_id: String,
    pub window: TimeWindow,
    pub label: u8,
}

pub fn build_samples(store: &EntityStore) -> Vec<SampleEvent> {
    build_samples_for(store, &window_schedule())
}

/// Samples for every eligible company in each window, ordered by window
/// index and then company id.
pub fn build_samples_for(store: &EntityStore, windows: &[TimeWindow]) -> Vec<SampleEvent> {
    let mut by_id: Vec<CompanyIdx> = (0..store.companies().len()).collect();
    by_id.sort_by(|&a, &b| store.company(a).id.cmp(&store.company(b).id));
    let mut windows = windows.to_vec();
    windows.sort_by_key(|w| w.index);
    let mut out = Vec::new();
    for w in &windows {
        for &c in &by_id {
            if eligible(store, c, w.start) {
                out.push(SampleEvent {
                    company: c,
                    company_id: store.company(c).id.clone(),
                    window: *w,
                    label: label(store, c, w),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSplit<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
}

/// Seeded shuffle of `0..n` cut at `round(n * ratio)`.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::invalid("cannot split an empty sample list"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * ratio).round() as usize;
    let test = idx.split_off(n_train.min(n));
    Ok((idx, test))
}

pub fn split_train_test<T: Clone>(items: &[T], ratio: f64, seed: u64) -> Result<SampleSplit<T>> {
    let (train, test) = split_indices(items.len(), ratio, seed)?;
    Ok(SampleSplit {
        train: train.iter().map(|&i| items[i].clone()).collect(),
        test: test.iter().map(|&i| items[i].clone()).collect(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    Single,
    Multiple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyProtocol {
    /// Test on the held-out part of the current window.
    InSample,
    /// Test on the whole current window, train on earlier windows only.
    OutOfSample,
}

/// Index sets into a sample list for one window of the single-vs-multiple study.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudySets {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Builds the training and test index sets for target window `window_index`.
///
/// In-sample: the target window is split 90/10 with `split_seed`; single
/// trains on its 90%, multiple adds every earlier window. Out-of-sample:
/// the whole target window is the test set; single trains on the previous
/// window, multiple on all earlier windows. A target without history
/// falls back to the single set.
pub fn cumulative_training_sets(
    samples: &[SampleEvent],
    window_index: usize,
    mode: WindowMode,
    protocol: StudyProtocol,
    split_seed: u64,
) -> Result<StudySets> {
    let windows: Vec<usize> = samples.iter().map(|s| s.window.index).collect();
    study_sets(&windows, window_index, mode, protocol, split_seed)
}

/// [`cumulative_training_sets`] over the window index of each row.
pub fn study_sets(
    windows: &[usize],
    window_index: usize,
    mode: WindowMode,
    protocol: StudyProtocol,
    split_seed: u64,
) -> Result<StudySets> {
    let of_window = |k: usize| -> Vec<usize> {
        windows
            .iter()
            .enumerate()
            .filter(|(_, &w)| w == k)
            .map(|(i, _)| i)
            .collect()
    };
    let history = |upto: usize| -> Vec<usize> {
        windows
            .iter()
            .enumerate()
            .filter(|(_, &w)| w < upto)
            .map(|(i, _)| i)
            .collect()
    };
    let current = of_window(window_index);
    match protocol {
        StudyProtocol::InSample => {
            let (tr, te) = split_indices(current.len(), 0.9, split_seed)?;
            let mut train: Vec<usize> = tr.iter().map(|&i| current[i]).collect();
            let mut test: Vec<usize> = te.iter().map(|&i| current[i]).collect();
            if mode == WindowMode::Multiple {
                let mut all = history(window_index);
                all.extend(train);
                train = all;
            }
            train.sort_unstable();
            test.sort_unstable();
            Ok(StudySets { train, test })
        }
        StudyProtocol::OutOfSample => {
            if window_index == 0 {
                return Err(Error::invalid(
                    "out-of-sample study needs at least one earlier window",
                ));
            }
            let train = match mode {
                WindowMode::Single => of_window(window_index - 1),
                WindowMode::Multiple => history(window_index),
            };
            Ok(StudySets {
                train,
                test: current,
            })
        }
    }
}

/// One row of the label-distribution table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub t_s: String,
    pub t_f: String,
    pub success: usize,
    pub fail: usize,
}

impl DistributionRow {
    pub fn success_rate(&self) -> f64 {
        let n = self.success + self.fail;
        if n == 0 {
            0.0
        } else {
            self.success as f64 / n as f64
        }
    }
}

fn tally<'a>(t_s: &str, t_f: &str, labels: impl Iterator<Item = &'a u8>) -> DistributionRow {
    let (mut success, mut fail) = (0, 0);
    for &l in labels {
        if l == 1 {
            success += 1;
        } else {
            fail += 1;
        }
    }
    DistributionRow {
        t_s: t_s.into(),
        t_f: t_f.into(),
        success,
        fail,
    }
}

/// Per-window label counts followed by Total, Train, Train (SMOTE) and Test rows.
pub fn label_distribution(samples: &[SampleEvent], ratio: f64, seed: u64) -> Result<Vec<DistributionRow>> {
    let mut rows = Vec::new();
    for w in window_schedule() {
        rows.push(tally(
            &format_date(w.start),
            &format_date(w.end),
            samples
                .iter()
                .filter(|s| s.window.index == w.index)
                .map(|s| &s.label),
        ));
    }
    rows.push(tally("Total", "", samples.iter().map(|s| &s.label)));
    let (train, test) = split_indices(samples.len(), ratio, seed)?;
    let train_row = tally("Train", "", train.iter().map(|&i| &samples[i].label));
    let majority = train_row.success.max(train_row.fail);
    rows.push(train_row);
    rows.push(DistributionRow {
        t_s: "Train (SMOTE)".into(),
        t_f: String::new(),
        success: majority,
        fail: majority,
    });
    rows.push(tally("Test", "", test.iter().map(|&i| &samples[i].label)));
    Ok(rows)
}

pub fn write_distribution_csv(rows: &[DistributionRow], path: &Path) -> Result<()> {
    let mut out = String::from("t_s,t_f,success,fail,success_pct\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.2}\n",
            r.t_s,
            r.t_f,
            r.success,
            r.fail,
            r.success_rate() * 100.0
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_samples_csv(samples: &[SampleEvent], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "company_id,window_index,t_s,t_f,label").map_err(io)?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.company_id,
            s.window.index,
            format_date(s.window.start),
            format_date(s.window.end),
            s.label
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a sample CSV back, resolving company ids against `store`.
pub fn read_samples_csv(store: &EntityStore, path: &Path) -> Result<Vec<SampleEvent>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::invalid("short sample row"));
        let company_id = field(0)?.to_string();
        let company = store
            .company_idx(&company_id)
            .ok_or_else(|| Error::invalid(format!("unknown company {company_id}")))?;
        let index: usize = field(1)?
            .parse()
            .map_err(|_| Error::invalid("bad window_index"))?;
        let window = TimeWindow {
            index,
            start: parse_date(field(2)?)?,
            end: parse_date(field(3)?)?,
        };
        let label: u8 = field(4)?.parse().map_err(|_| Error::invalid("bad label"))?;
        if label > 1 {
            return Err(Error::invalid("label must be 0 or 1"));
        }
        out.push(SampleEvent {
            company,
            company_id,
            window,
            label,
        });
    }
    Ok(out)
}
