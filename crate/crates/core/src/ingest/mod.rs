//! Funding-export loading and the immutable entity store.

mod load;
mod stats;

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

pub use load::{load_export, FileCounts, LoadReport, REQUIRED_FILES};
pub use stats::{round_interval_stats, IntervalRow, IntervalStats};

use crate::dates::ymd;

/// Index of a company inside an [`EntityStore`].
pub type CompanyIdx = usize;
/// Index of an investor inside an [`EntityStore`].
pub type InvestorIdx = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoundType {
    PreSeed,
    Seed,
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
    OtherEquity,
    Debt,
    NonEquity,
    Corporate,
    Convertible,
    Unknown,
}

const LETTERED: [RoundType; 11] = [
    RoundType::Seed,
    RoundType::A,
    RoundType::B,
    RoundType::C,
    RoundType::D,
    RoundType::E,
    RoundType::F,
    RoundType::G,
    RoundType::H,
    RoundType::I,
    RoundType::J,
];

impl RoundType {
    /// Parses an `investment_type` cell. Unrecognised values map to `Unknown`.
    /// A trailing `+`/`_plus` ("Series A+") folds into its letter.
    pub fn parse(raw: &str) -> RoundType {
        let mut s: String = raw
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        for suffix in ["_plus", "+"] {
            if let Some(stripped) = s.strip_suffix(suffix) {
                s = stripped.to_string();
            }
        }
        let letter = s.strip_prefix("series_").unwrap_or(&s);
        if letter.len() == 1 {
            let c = letter.as_bytes()[0];
            if (b'a'..=b'j').contains(&c) {
                return LETTERED[(c - b'a') as usize + 1].clone();
            }
        }
        match s.as_str() {
            "seed" => RoundType::Seed,
            "pre_seed" | "angel" => RoundType::PreSeed,
            "series_unknown" | "venture" | "private_equity" | "equity_crowdfunding"
            | "post_ipo_equity" | "secondary_market" | "initial_coin_offering"
            | "other_equity" => RoundType::OtherEquity,
            "debt_financing" | "debt" | "post_ipo_debt" => RoundType::Debt,
            "non_equity_assistance" | "grant" | "product_crowdfunding" | "non_equity" => {
                RoundType::NonEquity
            }
            "corporate_round" | "corporate" => RoundType::Corporate,
            "convertible_note" | "convertible" => RoundType::Convertible,
            _ => RoundType::Unknown,
        }
    }

    /// Canonical `investment_type` string written to exports.
    pub fn export_str(&self) -> &'static str {
        match self {
            RoundType::PreSeed => "pre_seed",
            RoundType::Seed => "seed",
            RoundType::A => "series_a",
            RoundType::B => "series_b",
            RoundType::C => "series_c",
            RoundType::D => "series_d",
            RoundType::E => "series_e",
            RoundType::F => "series_f",
            RoundType::G => "series_g",
            RoundType::H => "series_h",
            RoundType::I => "series_i",
            RoundType::J => "series_j",
            RoundType::OtherEquity => "other_equity",
            RoundType::Debt => "debt_financing",
            RoundType::NonEquity => "non_equity_assistance",
            RoundType::Corporate => "corporate_round",
            RoundType::Convertible => "convertible_note",
            RoundType::Unknown => "undisclosed",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            RoundType::PreSeed => "Pre-Seed",
            RoundType::Seed => "Seed",
            RoundType::A => "Series A",
            RoundType::B => "Series B",
            RoundType::C => "Series C",
            RoundType::D => "Series D",
            RoundType::E => "Series E",
            RoundType::F => "Series F",
            RoundType::G => "Series G",
            RoundType::H => "Series H",
            RoundType::I => "Series I",
            RoundType::J => "Series J",
            RoundType::OtherEquity => "Other Equity",
            RoundType::Debt => "Debt Financing",
            RoundType::NonEquity => "Non Equity Assistance",
            RoundType::Corporate => "Corporate Round",
            RoundType::Convertible => "Convertible Note",
            RoundType::Unknown => "Undisclosed",
        }
    }

    /// Position in the Seed, A, B, ... J ladder.
    pub fn lettered_rank(&self) -> Option<usize> {
        LETTERED.iter().position(|r| r == self)
    }

    pub fn from_lettered_rank(rank: usize) -> Option<RoundType> {
        LETTERED.get(rank).cloned()
    }

    pub fn short_label(&self) -> &'static str {
        match self {
            RoundType::Seed => "Seed",
            RoundType::A => "A",
            RoundType::B => "B",
            RoundType::C => "C",
            RoundType::D => "D",
            RoundType::E => "E",
            RoundType::F => "F",
            RoundType::G => "G",
            RoundType::H => "H",
            RoundType::I => "I",
            RoundType::J => "J",
            other => other.display_name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExitKind {
    Ipo,
    Acquisition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Company {
    pub id: String,
    pub name: String,
    pub founded: Option<NaiveDate>,
    pub closed: Option<NaiveDate>,
    pub country: Option<String>,
    pub province: Option<String>,
    pub city: Option<String>,
    /// Sorted, deduplicated industry tags.
    pub industries: Vec<String>,
}

impl Company {
    /// Province key, qualified by country.
    pub fn province_key(&self) -> Option<AreaKey> {
        let province = self.province.as_deref()?;
        Some(AreaKey::Province(format!(
            "{}|{}",
            self.country.as_deref().unwrap_or(""),
            province
        )))
    }

    /// City key, qualified by country and province.
    pub fn city_key(&self) -> Option<AreaKey> {
        let city = self.city.as_deref()?;
        Some(AreaKey::City(format!(
            "{}|{}|{}",
            self.country.as_deref().unwrap_or(""),
            self.province.as_deref().unwrap_or(""),
            city
        )))
    }

    /// True when the company has closed strictly before `t`.
    pub fn closed_before(&self, t: NaiveDate) -> bool {
        self.closed.is_some_and(|c| c < t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AreaKey {
    Province(String),
    City(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundingRound {
    pub id: String,
    pub company: CompanyIdx,
    pub round_type: RoundType,
    pub announced: NaiveDate,
    pub raised_usd: Option<f64>,
    pub investors: Vec<InvestorIdx>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitEvent {
    pub company: CompanyIdx,
    pub kind: ExitKind,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FounderRecord {
    pub person_id: String,
    pub foundings: Vec<CompanyIdx>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewsItem {
    pub company: CompanyIdx,
    pub date: NaiveDate,
}

/// Raw collections an [`EntityStore`] is built from. References are indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreParts {
    pub companies: Vec<Company>,
    pub investors: Vec<String>,
    pub rounds: Vec<FundingRound>,
    pub exits: Vec<ExitEvent>,
    pub founders: Vec<FounderRecord>,
    pub news: Vec<NewsItem>,
}

/// One investor participation in a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deal {
    pub date: NaiveDate,
    pub company: CompanyIdx,
    pub round: usize,
}

/// Immutable, indexed view over companies and their events.
#[derive(Debug, Clone)]
pub struct EntityStore {
    parts: StoreParts,
    company_by_id: HashMap<String, CompanyIdx>,
    rounds_by_company: Vec<Vec<usize>>,
    exits_by_company: Vec<Vec<usize>>,
    news_by_company: Vec<Vec<NaiveDate>>,
    founders_by_company: Vec<Vec<usize>>,
    deals_by_investor: Vec<Vec<Deal>>,
    companies_by_area: HashMap<AreaKey, Vec<CompanyIdx>>,
    companies_by_founding_year: BTreeMap<i32, Vec<CompanyIdx>>,
}

impl EntityStore {
    /// Builds every index. Panics if a reference is out of range, which
    /// only happens for hand-built parts.
    pub fn from_parts(parts: StoreParts) -> EntityStore {
        let n = parts.companies.len();
        let company_by_id = parts
            .companies
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.clone(), i))
            .collect();

        let mut rounds_by_company = vec![Vec::new(); n];
        for (i, r) in parts.rounds.iter().enumerate() {
            rounds_by_company[r.company].push(i);
        }
        for list in &mut rounds_by_company {
            list.sort_by_key(|&i| (parts.rounds[i].announced, i));
        }

        let mut exits_by_company = vec![Vec::new(); n];
        for (i, e) in parts.exits.iter().enumerate() {
            exits_by_company[e.company].push(i);
        }
        for list in &mut exits_by_company {
            list.sort_by_key(|&i| (parts.exits[i].date, i));
        }

        let mut news_by_company = vec![Vec::new(); n];
        for item in &parts.news {
            news_by_company[item.company].push(item.date);
        }
        for list in &mut news_by_company {
            list.sort_unstable();
        }

        let mut founders_by_company = vec![Vec::new(); n];
        for (i, f) in parts.founders.iter().enumerate() {
            for &c in &f.foundings {
                founders_by_company[c].push(i);
            }
        }
        for list in &mut founders_by_company {
            list.sort_unstable();
            list.dedup();
        }

        let mut deals_by_investor = vec![Vec::new(); parts.investors.len()];
        for (i, r) in parts.rounds.iter().enumerate() {
            for &inv in &r.investors {
                deals_by_investor[inv].push(Deal {
                    date: r.announced,
                    company: r.company,
                    round: i,
                });
            }
        }
        for list in &mut deals_by_investor {
            list.sort_by_key(|d| (d.date, d.round));
        }

        let mut companies_by_area: HashMap<AreaKey, Vec<CompanyIdx>> = HashMap::new();
        let mut companies_by_founding_year: BTreeMap<i32, Vec<CompanyIdx>> = BTreeMap::new();
        for (i, c) in parts.companies.iter().enumerate() {
            for key in [c.province_key(), c.city_key()].into_iter().flatten() {
                companies_by_area.entry(key).or_default().push(i);
            }
            if let Some(f) = c.founded {
                companies_by_founding_year.entry(f.year()).or_default().push(i);
            }
        }

        EntityStore {
            parts,
            company_by_id,
            rounds_by_company,
            exits_by_company,
            news_by_company,
            founders_by_company,
            deals_by_investor,
            companies_by_area,
            companies_by_founding_year,
        }
    }

    pub fn parts(&self) -> &StoreParts {
        &self.parts
    }

    pub fn into_parts(self) -> StoreParts {
        self.parts
    }

    pub fn companies(&self) -> &[Company] {
        &self.parts.companies
    }

    pub fn company(&self, idx: CompanyIdx) -> &Company {
        &self.parts.companies[idx]
    }

    pub fn company_idx(&self, id: &str) -> Option<CompanyIdx> {
        self.company_by_id.get(id).copied()
    }

    pub fn rounds(&self) -> &[FundingRound] {
        &self.parts.rounds
    }

    pub fn exits(&self) -> &[ExitEvent] {
        &self.parts.exits
    }

    pub fn founders(&self) -> &[FounderRecord] {
        &self.parts.founders
    }

    pub fn news(&self) -> &[NewsItem] {
        &self.parts.news
    }

    pub fn investors(&self) -> &[String] {
        &self.parts.investors
    }

    /// Rounds of a company, sorted by announcement date.
    pub fn company_rounds(&self, idx: CompanyIdx) -> impl Iterator<Item = &FundingRound> + '_ {
        self.rounds_by_company[idx].iter().map(|&i| &self.parts.rounds[i])
    }

    pub fn company_round_indices(&self, idx: CompanyIdx) -> &[usize] {
        &self.rounds_by_company[idx]
    }

    pub fn company_exits(&self, idx: CompanyIdx) -> impl Iterator<Item = &ExitEvent> + '_ {
        self.exits_by_company[idx].iter().map(|&i| &self.parts.exits[i])
    }

    /// Sorted news dates of a company.
    pub fn company_news(&self, idx: CompanyIdx) -> &[NaiveDate] {
        &self.news_by_company[idx]
    }

    pub fn company_founders(&self, idx: CompanyIdx) -> impl Iterator<Item = &FounderRecord> + '_ {
        self.founders_by_company[idx].iter().map(|&i| &self.parts.founders[i])
    }

    /// Deals of an investor, sorted by date.
    pub fn investor_deals(&self, investor: InvestorIdx) -> &[Deal] {
        &self.deals_by_investor[investor]
    }

    pub fn companies_in_area(&self, key: &AreaKey) -> &[CompanyIdx] {
        self.companies_by_area.get(key).map_or(&[], |v| v.as_slice())
    }

    pub fn areas(&self) -> impl Iterator<Item = (&AreaKey, &Vec<CompanyIdx>)> {
        self.companies_by_area.iter()
    }

    pub fn companies_founded_in(&self, year: i32) -> &[CompanyIdx] {
        self.companies_by_founding_year
            .get(&year)
            .map_or(&[], |v| v.as_slice())
    }

    /// Earliest exit of the given kind, if any.
    pub fn first_exit(&self, idx: CompanyIdx, kind: ExitKind) -> Option<NaiveDate> {
        self.company_exits(idx)
            .filter(|e| e.kind == kind)
            .map(|e| e.date)
            .next()
    }

    /// Checks that every index entry maps back to exactly one base record.
    pub fn indexes_consistent(&self) -> bool {
        let n = self.parts.companies.len();
        let mut seen_rounds = vec![0usize; self.parts.rounds.len()];
        for (c, list) in self.rounds_by_company.iter().enumerate() {
            for &r in list {
                if self.parts.rounds[r].company != c {
                    return false;
                }
                seen_rounds[r] += 1;
            }
        }
        if seen_rounds.iter().any(|&k| k != 1) {
            return false;
        }
        let mut seen_exits = vec![0usize; self.parts.exits.len()];
        for (c, list) in self.exits_by_company.iter().enumerate() {
            for &e in list {
                if self.parts.exits[e].company != c {
                    return false;
                }
                seen_exits[e] += 1;
            }
        }
        if seen_exits.iter().any(|&k| k != 1) {
            return false;
        }
        let news_total: usize = self.news_by_company.iter().map(Vec::len).sum();
        if news_total != self.parts.news.len() {
            return false;
        }
        let deal_total: usize = self.deals_by_investor.iter().map(Vec::len).sum();
        let participations: usize = self.parts.rounds.iter().map(|r| r.investors.len()).sum();
        if deal_total != participations {
            return false;
        }
        let year_total: usize = self.companies_by_founding_year.values().map(Vec::len).sum();
        let with_year = self.parts.companies.iter().filter(|c| c.founded.is_some()).count();
        self.company_by_id.len() == n && year_total == with_year
    }
}

/// Earliest founding date kept by [`filter_companies`].
pub fn founding_cutoff() -> NaiveDate {
    ymd(1990, 1, 1)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub companies_before: usize,
    pub companies_after: usize,
    pub missing_founded: usize,
    pub founded_before_1990: usize,
    pub dropped_rounds: usize,
    pub dropped_exits: usize,
    pub dropped_news: usize,
    pub dropped_founder_links: usize,
}

/// Drops companies with no founding date or founded before 1990, with
/// every record that depends on them.
pub fn filter_companies(store: &EntityStore) -> (EntityStore, FilterReport) {
    let parts = store.parts();
    let cutoff = founding_cutoff();
    let mut report = FilterReport {
        companies_before: parts.companies.len(),
        ..FilterReport::default()
    };
    let mut remap: Vec<Option<CompanyIdx>> = Vec::with_capacity(parts.companies.len());
    let mut companies = Vec::new();
    for c in &parts.companies {
        match c.founded {
            None => {
                report.missing_founded += 1;
                remap.push(None);
            }
            Some(f) if f < cutoff => {
                report.founded_before_1990 += 1;
                remap.push(None);
            }
            Some(_) => {
                remap.push(Some(companies.len()));
                companies.push(c.clone());
            }
        }
    }
    report.companies_after = companies.len();

    let rounds: Vec<FundingRound> = parts
        .rounds
        .iter()
        .filter_map(|r| {
            remap[r.company].map(|company| FundingRound {
                company,
                ..r.clone()
            })
        })
        .collect();
    report.dropped_rounds = parts.rounds.len() - rounds.len();

    let exits: Vec<ExitEvent> = parts
        .exits
        .iter()
        .filter_map(|e| remap[e.company].map(|company| ExitEvent { company, ..e.clone() }))
        .collect();
    report.dropped_exits = parts.exits.len() - exits.len();

    let news: Vec<NewsItem> = parts
        .news
        .iter()
        .filter_map(|n| remap[n.company].map(|company| NewsItem { company, date: n.date }))
        .collect();
    report.dropped_news = parts.news.len() - news.len();

    let mut founders = Vec::new();
    for f in &parts.founders {
        let kept: Vec<CompanyIdx> = f.foundings.iter().filter_map(|&c| remap[c]).collect();
        report.dropped_founder_links += f.foundings.len() - kept.len();
        if !kept.is_empty() {
            founders.push(FounderRecord {
                person_id: f.person_id.clone(),
                foundings: kept,
            });
        }
    }

    let filtered = EntityStore::from_parts(StoreParts {
        companies,
        investors: parts.investors.clone(),
        rounds,
        exits,
        founders,
        news,
    });
    (filtered, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn company(id: &str, founded: Option<NaiveDate>) -> Company {
        Company {
            id: id.to_string(),
            name: id.to_uppercase(),
            founded,
            closed: None,
            country: Some("USA".into()),
            province: Some("CA".into()),
            city: Some("SF".into()),
            industries: vec![],
        }
    }

    fn round(id: &str, company: usize, t: RoundType, d: NaiveDate) -> FundingRound {
        FundingRound {
            id: id.into(),
            company,
            round_type: t,
            announced: d,
            raised_usd: None,
            investors: vec![],
        }
    }

    #[test]
    fn round_type_parsing() {
        assert_eq!(RoundType::parse("series_a"), RoundType::A);
        assert_eq!(RoundType::parse("Series A+"), RoundType::A);
        assert_eq!(RoundType::parse("series_b_plus"), RoundType::B);
        assert_eq!(RoundType::parse("Seed"), RoundType::Seed);
        assert_eq!(RoundType::parse("angel"), RoundType::PreSeed);
        assert_eq!(RoundType::parse("Non Equity Assistance"), RoundType::NonEquity);
        assert_eq!(RoundType::parse("gibberish"), RoundType::Unknown);
        for t in LETTERED.iter().chain(&[RoundType::Debt, RoundType::Unknown]) {
            assert_eq!(&RoundType::parse(t.export_str()), t);
        }
    }

    #[test]
    fn filter_boundaries() {
        let parts = StoreParts {
            companies: vec![
                company("a", Some(ymd(1989, 12, 31))),
                company("b", Some(ymd(1990, 1, 1))),
                company("c", None),
            ],
            rounds: vec![
                round("r1", 0, RoundType::Seed, ymd(1995, 1, 1)),
                round("r2", 1, RoundType::Seed, ymd(1995, 1, 1)),
            ],
            news: vec![NewsItem {
                company: 2,
                date: ymd(2000, 1, 1),
            }],
            ..StoreParts::default()
        };
        let store = EntityStore::from_parts(parts);
        let (filtered, report) = filter_companies(&store);
        assert_eq!(filtered.companies().len(), 1);
        assert_eq!(filtered.companies()[0].id, "b");
        assert_eq!(report.founded_before_1990, 1);
        assert_eq!(report.missing_founded, 1);
        assert_eq!(report.dropped_rounds, 1);
        assert_eq!(report.dropped_news, 1);
        assert_eq!(filtered.rounds()[0].company, 0);
        assert!(filtered.indexes_consistent());
    }

    #[test]
    fn filter_is_idempotent() {
        let parts = StoreParts {
            companies: vec![
                company("a", Some(ymd(1980, 1, 1))),
                company("b", Some(ymd(2001, 5, 1))),
                company("c", Some(ymd(2003, 5, 1))),
            ],
            rounds: vec![round("r", 2, RoundType::A, ymd(2004, 1, 1))],
            founders: vec![FounderRecord {
                person_id: "p".into(),
                foundings: vec![0, 2],
            }],
            ..StoreParts::default()
        };
        let (once, _) = filter_companies(&EntityStore::from_parts(parts));
        let (twice, report) = filter_companies(&once);
        assert_eq!(once.parts(), twice.parts());
        assert_eq!(report.companies_before, report.companies_after);
        assert_eq!(twice.founders()[0].foundings, vec![1]);
    }
}
