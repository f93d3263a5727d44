//! The nineteen per-(company, t_s) factors.
//!
//! Every factor reads only store facts dated strictly before `t_s`.
//! Absent source data yields a missing cell, never zero.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{parse_cell, push_cell, Dataset};
use crate::dates::{format_date, months_between, parse_date};
use crate::error::{Error, Result};
use crate::ingest::{AreaKey, CompanyIdx, EntityStore, ExitKind, InvestorIdx};
use crate::windows::{SampleEvent, TimeWindow};

pub const N_FACTORS: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    FoundYearOffset,
    Macroeconomy,
    CompanyAgeMonths,
    NewsCount,
    MonthlyAvgNews,
    ProvinceProsperity,
    CityProsperity,
    MeanIndustryProsperityProvince,
    MaxIndustryProsperityProvince,
    MeanIndustryProsperityCity,
    MaxIndustryProsperityCity,
    NumFundingRounds,
    TotalRaisedUsd,
    MeanInvestorIpoFraction,
    MaxInvestorIpoFraction,
    MeanInvestorAcqFraction,
    MaxInvestorAcqFraction,
    MeanFounderFailFraction,
    MaxFounderFailFraction,
}

impl Factor {
    pub const ALL: [Factor; N_FACTORS] = [
        Factor::FoundYearOffset,
        Factor::Macroeconomy,
        Factor::CompanyAgeMonths,
        Factor::NewsCount,
        Factor::MonthlyAvgNews,
        Factor::ProvinceProsperity,
        Factor::CityProsperity,
        Factor::MeanIndustryProsperityProvince,
        Factor::MaxIndustryProsperityProvince,
        Factor::MeanIndustryProsperityCity,
        Factor::MaxIndustryProsperityCity,
        Factor::NumFundingRounds,
        Factor::TotalRaisedUsd,
        Factor::MeanInvestorIpoFraction,
        Factor::MaxInvestorIpoFraction,
        Factor::MeanInvestorAcqFraction,
        Factor::MaxInvestorAcqFraction,
        Factor::MeanFounderFailFraction,
        Factor::MaxFounderFailFraction,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Factor::FoundYearOffset => "found_year_offset",
            Factor::Macroeconomy => "macroeconomy",
            Factor::CompanyAgeMonths => "company_age_months",
            Factor::NewsCount => "news_count",
            Factor::MonthlyAvgNews => "monthly_avg_news",
            Factor::ProvinceProsperity => "province_prosperity",
            Factor::CityProsperity => "city_prosperity",
            Factor::MeanIndustryProsperityProvince => "mean_industry_prosperity_province",
            Factor::MaxIndustryProsperityProvince => "max_industry_prosperity_province",
            Factor::MeanIndustryProsperityCity => "mean_industry_prosperity_city",
            Factor::MaxIndustryProsperityCity => "max_industry_prosperity_city",
            Factor::NumFundingRounds => "num_funding_rounds",
            Factor::TotalRaisedUsd => "total_raised_usd",
            Factor::MeanInvestorIpoFraction => "mean_investor_ipo_fraction",
            Factor::MaxInvestorIpoFraction => "max_investor_ipo_fraction",
            Factor::MeanInvestorAcqFraction => "mean_investor_acq_fraction",
            Factor::MaxInvestorAcqFraction => "max_investor_acq_fraction",
            Factor::MeanFounderFailFraction => "mean_founder_fail_fraction",
            Factor::MaxFounderFailFraction => "max_founder_fail_fraction",
        }
    }

    pub fn definition(self) -> &'static str {
        match self {
            Factor::FoundYearOffset => "years from 1990 to the founding year",
            Factor::Macroeconomy => "companies founded in the same calendar year before t_s",
            Factor::CompanyAgeMonths => "age at t_s in months",
            Factor::NewsCount => "news items before t_s",
            Factor::MonthlyAvgNews => "news items before t_s per month of age",
            Factor::ProvinceProsperity => "active companies in the province at t_s",
            Factor::CityProsperity => "active companies in the city at t_s",
            Factor::MeanIndustryProsperityProvince => {
                "mean over industry tags of active same-tag companies in the province"
            }
            Factor::MaxIndustryProsperityProvince => {
                "max over industry tags of active same-tag companies in the province"
            }
            Factor::MeanIndustryProsperityCity => {
                "mean over industry tags of active same-tag companies in the city"
            }
            Factor::MaxIndustryProsperityCity => {
                "max over industry tags of active same-tag companies in the city"
            }
            Factor::NumFundingRounds => "funding rounds announced before t_s",
            Factor::TotalRaisedUsd => "USD raised in rounds before t_s",
            Factor::MeanInvestorIpoFraction => "mean IPO fraction over the company's investors",
            Factor::MaxInvestorIpoFraction => "max IPO fraction over the company's investors",
            Factor::MeanInvestorAcqFraction => {
                "mean acquisition fraction over the company's investors"
            }
            Factor::MaxInvestorAcqFraction => {
                "max acquisition fraction over the company's investors"
            }
            Factor::MeanFounderFailFraction => "mean fail fraction over the company's founders",
            Factor::MaxFounderFailFraction => "max fail fraction over the company's founders",
        }
    }

    pub fn from_name(name: &str) -> Option<Factor> {
        Factor::ALL.into_iter().find(|f| f.name() == name)
    }
}

pub fn factor_names() -> Vec<String> {
    Factor::ALL.iter().map(|f| f.name().to_string()).collect()
}

/// Slot name to definition, for reports.
pub fn factor_dictionary() -> BTreeMap<&'static str, &'static str> {
    Factor::ALL.iter().map(|f| (f.name(), f.definition())).collect()
}

/// Nineteen factor slots, each a value or missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [Option<f64>; N_FACTORS]);

impl FeatureVector {
    pub fn get(&self, f: Factor) -> Option<f64> {
        self.0[f.index()]
    }

    fn set(&mut self, f: Factor, v: Option<f64>) {
        self.0[f.index()] = v;
    }

    /// Dense row with NaN for missing.
    pub fn to_row(&self) -> [f64; N_FACTORS] {
        self.0.map(|v| v.unwrap_or(f64::NAN))
    }
}

/// How investor exit fractions count portfolio activity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvestorBasis {
    /// Distinct portfolio companies.
    #[default]
    PerCompany,
    /// Every round participation.
    PerDeal,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    #[serde(default)]
    pub investor_basis: InvestorBasis,
}

pub fn found_year_offset(store: &EntityStore, company: CompanyIdx) -> Option<i64> {
    store
        .company(company)
        .founded
        .map(|d| d.year() as i64 - 1990)
}

/// Companies founded in the same calendar year, counting only those
/// founded before `t_s`.
pub fn macroeconomy(store: &EntityStore, company: CompanyIdx, t_s: NaiveDate) -> Option<usize> {
    let year = store.company(company).founded?.year();
    Some(
        store
            .companies_founded_in(year)
            .iter()
            .filter(|&&c| store.company(c).founded.is_some_and(|f| f < t_s))
            .count(),
    )
}

pub fn company_age_months(store: &EntityStore, company: CompanyIdx, t_s: NaiveDate) -> Option<i64> {
    store
        .company(company)
        .founded
        .map(|f| months_between(f, t_s).max(0))
}

/// News count before `t_s` and its per-month average; an age of zero
/// months divides by one.
pub fn news_factors(store: &EntityStore, company: CompanyIdx, t_s: NaiveDate) -> (f64, f64) {
    let count = store.company_news(company).partition_point(|d| *d < t_s) as f64;
    let age = company_age_months(store, company, t_s).unwrap_or(0);
    (count, count / age.max(1) as f64)
}

fn active_at(store: &EntityStore, c: CompanyIdx, t_s: NaiveDate) -> bool {
    let company = store.company(c);
    company.founded.is_some_and(|f| f < t_s) && !company.closed_before(t_s)
}

/// Active companies headquartered in `area` at `t_s`.
pub fn prosperity(store: &EntityStore, area: &AreaKey, t_s: NaiveDate) -> usize {
    store
        .companies_in_area(area)
        .iter()
        .filter(|&&c| active_at(store, c, t_s))
        .count()
}

pub fn province_prosperity(store: &EntityStore, company: CompanyIdx, t_s: NaiveDate) -> Option<f64> {
    let key = store.company(company).province_key()?;
    Some(prosperity(store, &key, t_s) as f64)
}

pub fn city_prosperity(store: &EntityStore, company: CompanyIdx, t_s: NaiveDate) -> Option<f64> {
    let key = store.company(company).city_key()?;
    Some(prosperity(store, &key, t_s) as f64)
}

fn mean_max(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // keep the documented max >= mean ordering exact under rounding
    (Some(mean.min(max)), Some(max))
}

/// Mean and max over industry tags of active same-tag companies in the
/// province, then the city.
pub fn industry_prosperity(store: &EntityStore, company: CompanyIdx, t_s: NaiveDate) -> [Option<f64>; 4] {
    let c = store.company(company);
    let mut out = [None; 4];
    if c.industries.is_empty() {
        return out;
    }
    for (slot, key) in [(0, c.province_key()), (2, c.city_key())] {
        let Some(key) = key else { continue };
        let members = store.companies_in_area(&key);
        let counts: Vec<f64> = c
            .industries
            .iter()
            .map(|tag| {
                members
                    .iter()
                    .filter(|&&o| {
                        active_at(store, o, t_s) && store.company(o).industries.binary_search(tag).is_ok()
                    })
                    .count() as f64
            })
            .collect();
        let (mean, max) = mean_max(&counts);
        out[slot] = mean;
        out[slot + 1] = max;
    }
    out
}

/// Rounds before `t_s` and their summed USD; the total is missing only
/// when every prior round lacks an amount.
pub fn funding_factors(store: &EntityStore, company: CompanyIdx, t_s: NaiveDate) -> (usize, Option<f64>) {
    let mut n = 0;
    let mut total: Option<f64> = None;
    for r in store.company_rounds(company).take_while(|r| r.announced < t_s) {
        n += 1;
        if let Some(v) = r.raised_usd {
            *total.get_or_insert(0.0) += v;
        }
    }
    (n, total)
}

/// IPO and acquisition fractions of an investor's activity before `t_s`.
pub fn investor_track_record(
    store: &EntityStore,
    investor: InvestorIdx,
    t_s: NaiveDate,
    basis: InvestorBasis,
) -> Option<(f64, f64)> {
    let deals = store.investor_deals(investor);
    let prior = &deals[..deals.partition_point(|d| d.date < t_s)];
    let exited = |c: CompanyIdx, kind: ExitKind| store.first_exit(c, kind).is_some_and(|d| d < t_s);
    let (mut denom, mut ipo, mut acq) = (0usize, 0usize, 0usize);
    match basis {
        InvestorBasis::PerCompany => {
            let mut seen = HashSet::new();
            for d in prior {
                if seen.insert(d.company) {
                    denom += 1;
                    ipo += usize::from(exited(d.company, ExitKind::Ipo));
                    acq += usize::from(exited(d.company, ExitKind::Acquisition));
                }
            }
        }
        InvestorBasis::PerDeal => {
            for d in prior {
                denom += 1;
                ipo += usize::from(exited(d.company, ExitKind::Ipo));
                acq += usize::from(exited(d.company, ExitKind::Acquisition));
            }
        }
    }
    (denom > 0).then(|| (ipo as f64 / denom as f64, acq as f64 / denom as f64))
}

fn company_investors_before(store: &EntityStore, company: CompanyIdx, t_s: NaiveDate) -> Vec<InvestorIdx> {
    let mut out: Vec<InvestorIdx> = store
        .company_rounds(company)
        .take_while(|r| r.announced < t_s)
        .flat_map(|r| r.investors.iter().copied())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn aggregate_investors(fractions: impl Iterator<Item = Option<(f64, f64)>>) -> [Option<f64>; 4] {
    let (mut ipo, mut acq) = (Vec::new(), Vec::new());
    for (i, a) in fractions.flatten() {
        ipo.push(i);
        acq.push(a);
    }
    let (mi, xi) = mean_max(&ipo);
    let (ma, xa) = mean_max(&acq);
    [mi, xi, ma, xa]
}

/// Mean/max IPO fraction then mean/max acquisition fraction over the
/// distinct investors of pre-`t_s` rounds.
pub fn investor_factors(
    store: &EntityStore,
    company: CompanyIdx,
    t_s: NaiveDate,
    basis: InvestorBasis,
) -> [Option<f64>; 4] {
    aggregate_investors(
        company_investors_before(store, company, t_s)
            .into_iter()
            .map(|inv| investor_track_record(store, inv, t_s, basis)),
    )
}

/// Mean and max, over founders with earlier companies, of the share of
/// those earlier companies closed before `t_s`.
pub fn founder_factors(store: &EntityStore, company: CompanyIdx, t_s: NaiveDate) -> (Option<f64>, Option<f64>) {
    let Some(founded) = store.company(company).founded else {
        return (None, None);
    };
    let mut fractions = Vec::new();
    for f in store.company_founders(company) {
        let (mut prior, mut failed) = (0usize, 0usize);
        for &other in &f.foundings {
            let o = store.company(other);
            if other != company && o.founded.is_some_and(|d| d < founded) {
                prior += 1;
                failed += usize::from(o.closed_before(t_s));
            }
        }
        if prior > 0 {
            fractions.push(failed as f64 / prior as f64);
        }
    }
    mean_max(&fractions)
}

/// Computes all nineteen factors by direct scans of the store.
pub fn compute_features(store: &EntityStore, company: CompanyIdx, t_s: NaiveDate, cfg: &FeatureConfig) -> FeatureVector {
    let mut v = FeatureVector([None; N_FACTORS]);
    v.set(Factor::FoundYearOffset, found_year_offset(store, company).map(|x| x as f64));
    v.set(Factor::Macroeconomy, macroeconomy(store, company, t_s).map(|x| x as f64));
    v.set(Factor::CompanyAgeMonths, company_age_months(store, company, t_s).map(|x| x as f64));
    let (news, monthly) = news_factors(store, company, t_s);
    v.set(Factor::NewsCount, Some(news));
    v.set(Factor::MonthlyAvgNews, Some(monthly));
    v.set(Factor::ProvinceProsperity, province_prosperity(store, company, t_s));
    v.set(Factor::CityProsperity, city_prosperity(store, company, t_s));
    let ind = industry_prosperity(store, company, t_s);
    v.set(Factor::MeanIndustryProsperityProvince, ind[0]);
    v.set(Factor::MaxIndustryProsperityProvince, ind[1]);
    v.set(Factor::MeanIndustryProsperityCity, ind[2]);
    v.set(Factor::MaxIndustryProsperityCity, ind[3]);
    let (n, total) = funding_factors(store, company, t_s);
    v.set(Factor::NumFundingRounds, Some(n as f64));
    v.set(Factor::TotalRaisedUsd, total);
    let inv = investor_factors(store, company, t_s, cfg.investor_basis);
    v.set(Factor::MeanInvestorIpoFraction, inv[0]);
    v.set(Factor::MaxInvestorIpoFraction, inv[1]);
    v.set(Factor::MeanInvestorAcqFraction, inv[2]);
    v.set(Factor::MaxInvestorAcqFraction, inv[3]);
    let (mf, xf) = founder_factors(store, company, t_s);
    v.set(Factor::MeanFounderFailFraction, mf);
    v.set(Factor::MaxFounderFailFraction, xf);
    v
}

/// Counts members that are active at a date from two sorted lists.
#[derive(Debug, Default, Clone)]
struct ActiveCounter {
    founded: Vec<NaiveDate>,
    /// `max(founded, closed)` of members that closed.
    gone: Vec<NaiveDate>,
}

impl ActiveCounter {
    fn add(&mut self, founded: NaiveDate, closed: Option<NaiveDate>) {
        self.founded.push(founded);
        if let Some(c) = closed {
            self.gone.push(c.max(founded));
        }
    }

    fn finish(&mut self) {
        self.founded.sort_unstable();
        self.gone.sort_unstable();
    }

    fn active(&self, t: NaiveDate) -> usize {
        self.founded.partition_point(|d| *d < t) - self.gone.partition_point(|d| *d < t)
    }
}

/// Precomputed indexes that make per-sample factor evaluation cheap.
/// Produces the same values as [`compute_features`].
pub struct FeatureEngine<'a> {
    store: &'a EntityStore,
    cfg: FeatureConfig,
    areas: HashMap<AreaKey, ActiveCounter>,
    area_tags: HashMap<(AreaKey, String), ActiveCounter>,
    founding_years: HashMap<i32, Vec<NaiveDate>>,
}

/// Investor fractions frozen at one `t_s`.
pub struct Snapshot {
    t_s: NaiveDate,
    investors: Vec<Option<(f64, f64)>>,
}

impl<'a> FeatureEngine<'a> {
    pub fn new(store: &'a EntityStore, cfg: FeatureConfig) -> FeatureEngine<'a> {
        let mut areas: HashMap<AreaKey, ActiveCounter> = HashMap::new();
        let mut area_tags: HashMap<(AreaKey, String), ActiveCounter> = HashMap::new();
        let mut founding_years: HashMap<i32, Vec<NaiveDate>> = HashMap::new();
        for c in store.companies() {
            let Some(founded) = c.founded else { continue };
            founding_years.entry(founded.year()).or_default().push(founded);
            for key in [c.province_key(), c.city_key()].into_iter().flatten() {
                areas.entry(key.clone()).or_default().add(founded, c.closed);
                for tag in &c.industries {
                    area_tags
                        .entry((key.clone(), tag.clone()))
                        .or_default()
                        .add(founded, c.closed);
                }
            }
        }
        areas.values_mut().for_each(ActiveCounter::finish);
        area_tags.values_mut().for_each(ActiveCounter::finish);
        founding_years.values_mut().for_each(|v| v.sort_unstable());
        FeatureEngine {
            store,
            cfg,
            areas,
            area_tags,
            founding_years,
        }
    }

    pub fn store(&self) -> &EntityStore {
        self.store
    }

    pub fn snapshot(&self, t_s: NaiveDate) -> Snapshot {
        let investors = (0..self.store.investors().len())
            .map(|i| investor_track_record(self.store, i, t_s, self.cfg.investor_basis))
            .collect();
        Snapshot { t_s, investors }
    }

    pub fn features(&self, company: CompanyIdx, snap: &Snapshot) -> FeatureVector {
        let store = self.store;
        let t_s = snap.t_s;
        let c = store.company(company);
        let mut v = FeatureVector([None; N_FACTORS]);
        if let Some(founded) = c.founded {
            v.set(Factor::FoundYearOffset, Some((founded.year() - 1990) as f64));
            let year = &self.founding_years[&founded.year()];
            v.set(Factor::Macroeconomy, Some(year.partition_point(|d| *d < t_s) as f64));
            v.set(Factor::CompanyAgeMonths, Some(months_between(founded, t_s).max(0) as f64));
        }
        let (news, monthly) = news_factors(store, company, t_s);
        v.set(Factor::NewsCount, Some(news));
        v.set(Factor::MonthlyAvgNews, Some(monthly));
        let area_count = |key: &Option<AreaKey>| {
            key.as_ref()
                .map(|k| self.areas.get(k).map_or(0, |a| a.active(t_s)) as f64)
        };
        let (prov, city) = (c.province_key(), c.city_key());
        v.set(Factor::ProvinceProsperity, area_count(&prov));
        v.set(Factor::CityProsperity, area_count(&city));
        if !c.industries.is_empty() {
            for (slot, key) in [(Factor::MeanIndustryProsperityProvince, &prov), (Factor::MeanIndustryProsperityCity, &city)] {
                let Some(key) = key else { continue };
                let counts: Vec<f64> = c
                    .industries
                    .iter()
                    .map(|tag| {
                        self.area_tags
                            .get(&(key.clone(), tag.clone()))
                            .map_or(0, |a| a.active(t_s)) as f64
                    })
                    .collect();
                let (mean, max) = mean_max(&counts);
                v.0[slot.index()] = mean;
                v.0[slot.index() + 1] = max;
            }
        }
        let (n, total) = funding_factors(store, company, t_s);
        v.set(Factor::NumFundingRounds, Some(n as f64));
        v.set(Factor::TotalRaisedUsd, total);
        let inv = aggregate_investors(
            company_investors_before(store, company, t_s)
                .into_iter()
                .map(|i| snap.investors[i]),
        );
        v.set(Factor::MeanInvestorIpoFraction, inv[0]);
        v.set(Factor::MaxInvestorIpoFraction, inv[1]);
        v.set(Factor::MeanInvestorAcqFraction, inv[2]);
        v.set(Factor::MaxInvestorAcqFraction, inv[3]);
        let (mf, xf) = founder_factors(store, company, t_s);
        v.set(Factor::MeanFounderFailFraction, mf);
        v.set(Factor::MaxFounderFailFraction, xf);
        v
    }
}

/// Feature rows for every sample, in sample order.
pub fn feature_matrix(store: &EntityStore, samples: &[SampleEvent], cfg: &FeatureConfig) -> Dataset {
    let engine = FeatureEngine::new(store, *cfg);
    let mut snapshots: BTreeMap<NaiveDate, Snapshot> = BTreeMap::new();
    for s in samples {
        snapshots
            .entry(s.window.start)
            .or_insert_with(|| engine.snapshot(s.window.start));
    }
    let rows: Vec<[f64; N_FACTORS]> = samples
        .par_iter()
        .map(|s| engine.features(s.company, &snapshots[&s.window.start]).to_row())
        .collect();
    let mut d = Dataset::with_capacity(factor_names(), samples.len());
    for (row, s) in rows.iter().zip(samples) {
        d.push_row(row, s.label, 1.0).expect("well-formed feature row");
    }
    d
}

/// Identifies the sample a feature row belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleKey {
    pub company_id: String,
    pub window: TimeWindow,
}

/// Feature CSV contents: sample keys plus the labelled matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub keys: Vec<SampleKey>,
    pub data: Dataset,
}

impl FeatureTable {
    pub fn from_samples(samples: &[SampleEvent], data: Dataset) -> FeatureTable {
        FeatureTable {
            keys: samples
                .iter()
                .map(|s| SampleKey {
                    company_id: s.company_id.clone(),
                    window: s.window,
                })
                .collect(),
            data,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> FeatureTable {
        FeatureTable {
            keys: idx.iter().map(|&i| self.keys[i].clone()).collect(),
            data: self.data.subset(idx),
        }
    }

    /// Latest window end across rows, i.e. the last date whose outcomes
    /// the labels depend on.
    pub fn label_horizon(&self) -> Option<NaiveDate> {
        self.keys.iter().map(|k| k.window.end).max()
    }

    /// `company_id,window_index,t_s,t_f,label,<factors>`; missing cells empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "company_id,window_index,t_s,t_f,label,{}", self.data.feature_names().join(",")).map_err(io)?;
        for (i, k) in self.keys.iter().enumerate() {
            let mut line = format!(
                "{},{},{},{},{}",
                k.company_id,
                k.window.index,
                format_date(k.window.start),
                format_date(k.window.end),
                self.data.labels()[i]
            );
            for &v in self.data.row(i) {
                line.push(',');
                push_cell(&mut line, v);
            }
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: &Path) -> Result<FeatureTable> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let fixed = ["company_id", "window_index", "t_s", "t_f", "label"];
        if headers.len() < fixed.len() || fixed.iter().enumerate().any(|(i, h)| &headers[i] != *h) {
            return Err(Error::invalid(format!(
                "{}: expected leading columns {}",
                path.display(),
                fixed.join(",")
            )));
        }
        let names: Vec<String> = headers.iter().skip(fixed.len()).map(String::from).collect();
        let m = names.len();
        let mut data = Dataset::new(names);
        let mut keys = Vec::new();
        let mut row = Vec::with_capacity(m);
        for rec in reader.records() {
            let rec = rec?;
            if rec.len() != fixed.len() + m {
                return Err(Error::invalid("feature row has the wrong number of cells"));
            }
            let window = TimeWindow {
                index: rec[1].parse().map_err(|_| Error::invalid("bad window_index"))?,
                start: parse_date(&rec[2])?,
                end: parse_date(&rec[3])?,
            };
            let label: u8 = rec[4].parse().map_err(|_| Error::invalid("bad label"))?;
            row.clear();
            for j in 0..m {
                row.push(parse_cell(&rec[fixed.len() + j])?);
            }
            data.push_row(&row, label, 1.0)?;
            keys.push(SampleKey {
                company_id: rec[0].to_string(),
                window,
            });
        }
        Ok(FeatureTable { keys, data })
    }
}
