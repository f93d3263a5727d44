//! Top-k portfolios, success curves, stage filters and out-of-sample
//! backtests.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dates::format_date;
use crate::error::{Error, Result};
use crate::features::{feature_matrix, FeatureConfig, FeatureTable};
use crate::ingest::{CompanyIdx, EntityStore, ExitKind, RoundType};
use crate::model::{ModelFile, ModelSpec};
use crate::windows::{build_samples_for, eligible, TimeWindow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCompany {
    pub company_id: String,
    pub probability: f64,
}

/// Descending probability, then ascending id.
fn rank_order(scored: &[ScoredCompany]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b]
            .probability
            .total_cmp(&scored[a].probability)
            .then_with(|| scored[a].company_id.cmp(&scored[b].company_id))
    });
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub entries: Vec<ScoredCompany>,
    pub k: usize,
    pub as_of: NaiveDate,
}

/// The `k` most probable companies.
pub fn construct(scored: &[ScoredCompany], k: usize, as_of: NaiveDate) -> Result<Portfolio> {
    if k > scored.len() {
        return Err(Error::invalid(format!("k = {k} exceeds the pool of {}", scored.len())));
    }
    if scored.iter().any(|s| s.probability.is_nan()) {
        return Err(Error::invalid("NaN probability in the pool"));
    }
    let entries = rank_order(scored).into_iter().take(k).map(|i| scored[i].clone()).collect();
    Ok(Portfolio { entries, k, as_of })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessCurve {
    /// `(k, successes among the top k)`.
    pub points: Vec<(usize, usize)>,
}

/// Successes among the top `k` for every requested `k`, clipped to the
/// pool size. `labels` align with `scored`.
pub fn success_curve(scored: &[ScoredCompany], labels: &[u8], ks: &[usize]) -> Result<SuccessCurve> {
    if labels.len() != scored.len() {
        return Err(Error::invalid("labels and scores differ in length"));
    }
    let order = rank_order(scored);
    let mut cumulative = Vec::with_capacity(order.len() + 1);
    cumulative.push(0usize);
    for &i in &order {
        let last = *cumulative.last().expect("non-empty");
        cumulative.push(last + usize::from(labels[i] == 1));
    }
    let mut ks: Vec<usize> = ks.iter().map(|&k| k.min(order.len())).collect();
    ks.sort_unstable();
    ks.dedup();
    Ok(SuccessCurve {
        points: ks.into_iter().map(|k| (k, cumulative[k])).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    BeforeSeriesA,
    SeriesA,
    SeriesB,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::BeforeSeriesA, Stage::SeriesA, Stage::SeriesB];

    pub fn name(self) -> &'static str {
        match self {
            Stage::BeforeSeriesA => "before-series-a",
            Stage::SeriesA => "series-a",
            Stage::SeriesB => "series-b",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage '{s}'")))
    }
}

/// Which stage each round type places a company in; unmapped types are
/// excluded from every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMap {
    pub stages: BTreeMap<String, Stage>,
}

impl Default for StageMap {
    fn default() -> Self {
        let mut stages = BTreeMap::new();
        for rt in [RoundType::PreSeed, RoundType::Seed, RoundType::Convertible, RoundType::NonEquity] {
            stages.insert(rt.export_str().to_string(), Stage::BeforeSeriesA);
        }
        stages.insert(RoundType::A.export_str().to_string(), Stage::SeriesA);
        stages.insert(RoundType::B.export_str().to_string(), Stage::SeriesB);
        StageMap { stages }
    }
}

impl StageMap {
    pub fn stage_of(&self, rt: &RoundType) -> Option<Stage> {
        self.stages.get(rt.export_str()).copied()
    }
}

/// Latest round of `company` strictly before `as_of`.
fn last_round_before(store: &EntityStore, company: CompanyIdx, as_of: NaiveDate) -> Option<(RoundType, NaiveDate)> {
    store
        .company_rounds(company)
        .filter(|r| r.announced < as_of)
        .last()
        .map(|r| (r.round_type.clone(), r.announced))
}

pub fn company_stage(store: &EntityStore, company: CompanyIdx, as_of: NaiveDate, map: &StageMap) -> Option<Stage> {
    last_round_before(store, company, as_of).and_then(|(rt, _)| map.stage_of(&rt))
}

/// Eligible companies at `as_of` whose latest prior round maps to `stage`,
/// by ascending index.
pub fn stage_filter(store: &EntityStore, stage: Stage, as_of: NaiveDate, map: &StageMap) -> Vec<CompanyIdx> {
    (0..store.companies().len())
        .filter(|&c| eligible(store, c, as_of) && company_stage(store, c, as_of, map) == Some(stage))
        .collect()
}

/// The out-of-sample window must start after every label used in training.
pub fn check_no_leakage(label_horizon: Option<NaiveDate>, oos: &TimeWindow) -> Result<()> {
    match label_horizon {
        None => Err(Error::Leakage("model records no label horizon".into())),
        Some(h) if oos.start <= h => Err(Error::Leakage(format!(
            "training labels run to {} but the out-of-sample window starts {}",
            format_date(h),
            format_date(oos.start)
        ))),
        Some(_) => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioRow {
    pub rank: usize,
    pub company_id: String,
    pub name: String,
    pub probability: f64,
    pub last_deal: String,
    pub first_deal_in_window: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub rows: Vec<PortfolioRow>,
    pub curve: SuccessCurve,
    pub pool: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub window: TimeWindow,
    pub portfolio: Portfolio,
    pub rows: Vec<PortfolioRow>,
    pub curve: SuccessCurve,
    pub pool: usize,
    pub successes: usize,
    pub stages: BTreeMap<Stage, StageResult>,
}

fn describe_last_deal(store: &EntityStore, c: CompanyIdx, as_of: NaiveDate) -> String {
    last_round_before(store, c, as_of).map_or(String::new(), |(rt, d)| format!("{} ({})", rt.display_name(), format_date(d)))
}

fn describe_first_event(store: &EntityStore, c: CompanyIdx, w: &TimeWindow) -> String {
    let round = store
        .company_rounds(c)
        .find(|r| w.contains(r.announced))
        .map(|r| (r.announced, r.round_type.display_name()));
    let exit = store
        .company_exits(c)
        .filter(|e| w.contains(e.date))
        .min_by_key(|e| e.date)
        .map(|e| {
            (
                e.date,
                match e.kind {
                    ExitKind::Ipo => "IPO",
                    ExitKind::Acquisition => "Acquisition",
                },
            )
        });
    match (round, exit) {
        (Some(r), Some(e)) => Some(if e.0 < r.0 { e } else { r }),
        (r, e) => r.or(e),
    }
    .map_or(String::new(), |(d, what)| format!("{what} ({})", format_date(d)))
}

struct Pool {
    companies: Vec<CompanyIdx>,
    scored: Vec<ScoredCompany>,
    labels: Vec<u8>,
}

fn rows_for(store: &EntityStore, pool: &Pool, members: &[usize], k: usize, w: &TimeWindow) -> Vec<PortfolioRow> {
    let scored: Vec<ScoredCompany> = members.iter().map(|&i| pool.scored[i].clone()).collect();
    rank_order(&scored)
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, j)| {
            let i = members[j];
            let c = pool.companies[i];
            PortfolioRow {
                rank: rank + 1,
                company_id: pool.scored[i].company_id.clone(),
                name: store.company(c).name.clone(),
                probability: pool.scored[i].probability,
                last_deal: describe_last_deal(store, c, w.start),
                first_deal_in_window: describe_first_event(store, c, w),
                label: pool.labels[i],
            }
        })
        .collect()
}

/// Scores every company eligible at the window start with a trained model
/// and realises the window's labels.
pub fn backtest_model(
    store: &EntityStore,
    model: &ModelFile,
    oos: &TimeWindow,
    k: usize,
    ks: &[usize],
    stage_map: &StageMap,
    cfg: &FeatureConfig,
) -> Result<BacktestResult> {
    check_no_leakage(model.label_horizon, oos)?;
    let samples = build_samples_for(store, std::slice::from_ref(oos));
    if samples.is_empty() {
        return Err(Error::invalid(format!("no eligible companies at {}", format_date(oos.start))));
    }
    let data = feature_matrix(store, &samples, cfg);
    let probs = model.predict_dataset(&data)?;
    let pool = Pool {
        companies: samples.iter().map(|s| s.company).collect(),
        scored: samples
            .iter()
            .zip(&probs)
            .map(|(s, &p)| ScoredCompany {
                company_id: s.company_id.clone(),
                probability: p,
            })
            .collect(),
        labels: samples.iter().map(|s| s.label).collect(),
    };
    let k_all = k.min(pool.scored.len());
    let portfolio = construct(&pool.scored, k_all, oos.start)?;
    let all: Vec<usize> = (0..pool.scored.len()).collect();
    let mut stages = BTreeMap::new();
    for stage in Stage::ALL {
        let members: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&i| company_stage(store, pool.companies[i], oos.start, stage_map) == Some(stage))
            .collect();
        let scored: Vec<ScoredCompany> = members.iter().map(|&i| pool.scored[i].clone()).collect();
        let labels: Vec<u8> = members.iter().map(|&i| pool.labels[i]).collect();
        stages.insert(
            stage,
            StageResult {
                rows: rows_for(store, &pool, &members, k, oos),
                curve: success_curve(&scored, &labels, ks)?,
                pool: members.len(),
                successes: labels.iter().filter(|&&y| y == 1).count(),
            },
        );
    }
    Ok(BacktestResult {
        window: *oos,
        rows: rows_for(store, &pool, &all, k_all, oos),
        curve: success_curve(&pool.scored, &pool.labels, ks)?,
        pool: pool.scored.len(),
        successes: pool.labels.iter().filter(|&&y| y == 1).count(),
        portfolio,
        stages,
    })
}

/// Trains `spec` on the samples of `train_windows` and backtests on `oos`.
#[allow(clippy::too_many_arguments)]
pub fn backtest(
    store: &EntityStore,
    spec: &ModelSpec,
    train_windows: &[TimeWindow],
    oos: &TimeWindow,
    k: usize,
    ks: &[usize],
    stage_map: &StageMap,
    cfg: &FeatureConfig,
) -> Result<BacktestResult> {
    let horizon = train_windows.iter().map(|w| w.end).max();
    check_no_leakage(horizon, oos)?;
    let samples = build_samples_for(store, train_windows);
    let table = FeatureTable::from_samples(&samples, feature_matrix(store, &samples, cfg));
    let model = spec.train(&table.data)?;
    let file = ModelFile::new(spec.clone(), model, "none", table.data.feature_names().to_vec(), table.label_horizon());
    backtest_model(store, &file, oos, k, ks, stage_map, cfg)
}

pub fn write_portfolio_csv(rows: &[PortfolioRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "company_id", "name", "probability", "last_deal", "first_deal_in_window", "label"])?;
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.company_id.clone(),
            r.name.clone(),
            r.probability.to_string(),
            r.last_deal.clone(),
            r.first_deal_in_window.clone(),
            r.label.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_curve_csv(curve: &SuccessCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "successes"])?;
    for (k, s) in &curve.points {
        w.write_record([k.to_string(), s.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dates::ymd;

    fn pool(v: &[(&str, f64)]) -> Vec<ScoredCompany> {
        v.iter()
            .map(|(id, p)| ScoredCompany {
                company_id: id.to_string(),
                probability: *p,
            })
            .collect()
    }

    #[test]
    fn top_k_with_id_ties() {
        let d = ymd(2019, 1, 1);
        let p = construct(&pool(&[("A", 0.9), ("B", 0.8), ("C", 0.1)]), 2, d).unwrap();
        let ids: Vec<&str> = p.entries.iter().map(|e| e.company_id.as_str()).collect();
        assert_eq!(ids, vec!["A", "B"]);
        let t = construct(&pool(&[("Z", 0.8), ("Y", 0.8), ("X", 0.1)]), 3, d).unwrap();
        let ids: Vec<&str> = t.entries.iter().map(|e| e.company_id.as_str()).collect();
        assert_eq!(ids, vec!["Y", "Z", "X"]);
        assert!(construct(&pool(&[("A", 0.5)]), 2, d).is_err());
        assert!(construct(&pool(&[("A", 0.5)]), 0, d).unwrap().entries.is_empty());
    }

    #[test]
    fn curve_of_a_perfect_ranking() {
        let scored = pool(&[("a", 0.9), ("b", 0.7), ("c", 0.5), ("d", 0.1)]);
        let c = success_curve(&scored, &[1, 1, 0, 0], &[1, 2, 3, 4, 10]).unwrap();
        assert_eq!(c.points, vec![(1, 1), (2, 2), (3, 2), (4, 2)]);
    }

    #[test]
    fn stage_mapping() {
        let m = StageMap::default();
        assert_eq!(m.stage_of(&RoundType::Seed), Some(Stage::BeforeSeriesA));
        assert_eq!(m.stage_of(&RoundType::parse("series_a_plus")), Some(Stage::SeriesA));
        assert_eq!(m.stage_of(&RoundType::C), None);
        assert_eq!("series-b".parse::<Stage>().unwrap(), Stage::SeriesB);
    }

    #[test]
    fn leakage_guard() {
        let w = TimeWindow::starting_at(0, ymd(2019, 1, 1));
        assert!(check_no_leakage(Some(ymd(2018, 12, 31)), &w).is_ok());
        assert!(matches!(check_no_leakage(Some(ymd(2019, 1, 1)), &w), Err(Error::Leakage(_))));
        assert!(check_no_leakage(None, &w).is_err());
    }
}
