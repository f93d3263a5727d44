use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{
    Company, EntityStore, ExitEvent, ExitKind, FounderRecord, FundingRound, NewsItem, RoundType,
    StoreParts,
};
use crate::dates::parse_date;
use crate::error::{Error, Result};

pub const REQUIRED_FILES: [&str; 7] = [
    "organizations.csv",
    "funding_rounds.csv",
    "investments.csv",
    "acquisitions.csv",
    "ipos.csv",
    "founders.csv",
    "news.csv",
];

/// Per-file row accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileCounts {
    pub rows: usize,
    pub loaded: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub dangling: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub files: BTreeMap<String, FileCounts>,
}

impl LoadReport {
    pub fn warnings(&self) -> usize {
        self.files.values().map(|c| c.malformed).sum()
    }

    pub fn duplicates(&self) -> usize {
        self.files.values().map(|c| c.duplicates).sum()
    }
}

struct Table {
    reader: csv::Reader<std::fs::File>,
    columns: Vec<usize>,
}

impl Table {
    fn open(dir: &Path, file: &str, required: &[&str]) -> Result<Table> {
        let path = dir.join(file);
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_path(&path)?;
        let headers = reader.headers()?.clone();
        let columns = required
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h.trim() == *name)
                    .ok_or_else(|| Error::invalid(format!("{file}: missing column {name}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Table { reader, columns })
    }

    /// Calls `f` with the required fields of each row; rows that are not
    /// valid records or lack a field count as malformed.
    fn for_each(
        mut self,
        counts: &mut FileCounts,
        mut f: impl FnMut(&[&str], &mut FileCounts) -> std::result::Result<(), ()>,
    ) {
        let mut record = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut record) {
                Ok(false) => break,
                Ok(true) => {
                    counts.rows += 1;
                    let fields: Option<Vec<&str>> =
                        self.columns.iter().map(|&c| record.get(c)).collect();
                    match fields {
                        Some(fields) => {
                            if f(&fields, counts).is_err() {
                                counts.malformed += 1;
                            }
                        }
                        None => counts.malformed += 1,
                    }
                }
                Err(e) => {
                    counts.rows += 1;
                    counts.malformed += 1;
                    if !matches!(e.kind(), csv::ErrorKind::UnequalLengths { .. } | csv::ErrorKind::Utf8 { .. }) {
                        log::warn!("stopping read after csv error: {e}");
                        break;
                    }
                }
            }
        }
    }
}

fn optional(s: &str) -> Option<String> {
    let t = s.trim();
    (!t.is_empty()).then(|| t.to_string())
}

fn optional_date(s: &str) -> std::result::Result<Option<NaiveDate>, ()> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_date(s).map(Some).map_err(|_| ())
    }
}

fn required_date(s: &str) -> std::result::Result<NaiveDate, ()> {
    parse_date(s).map_err(|_| ())
}

/// Loads the seven export files from `dir`.
///
/// Unparseable rows are skipped and counted, duplicate primary keys keep
/// the first occurrence, and rows pointing at unknown entities are dropped.
pub fn load_export(dir: impl AsRef<Path>) -> Result<(EntityStore, LoadReport)> {
    let dir = dir.as_ref();
    let tables = [
        Table::open(
            dir,
            REQUIRED_FILES[0],
            &["uuid", "name", "founded_on", "closed_on", "status", "country", "region", "city", "category_list"],
        )?,
        Table::open(
            dir,
            REQUIRED_FILES[1],
            &["uuid", "org_uuid", "investment_type", "announced_on", "raised_amount_usd"],
        )?,
        Table::open(dir, REQUIRED_FILES[2], &["funding_round_uuid", "investor_uuid"])?,
        Table::open(dir, REQUIRED_FILES[3], &["acquiree_uuid", "acquired_on"])?,
        Table::open(dir, REQUIRED_FILES[4], &["org_uuid", "went_public_on"])?,
        Table::open(dir, REQUIRED_FILES[5], &["person_uuid", "org_uuid"])?,
        Table::open(dir, REQUIRED_FILES[6], &["org_uuid", "posted_on"])?,
    ];
    let [orgs, rounds_t, investments, acquisitions, ipos, founders_t, news_t] = tables;
    let mut report = LoadReport::default();
    let mut parts = StoreParts::default();

    let mut counts = FileCounts::default();
    let mut company_by_id: HashMap<String, usize> = HashMap::new();
    orgs.for_each(&mut counts, |f, counts| {
        let id = optional(f[0]).ok_or(())?;
        let founded = optional_date(f[2])?;
        let closed = optional_date(f[3])?;
        if company_by_id.contains_key(&id) {
            counts.duplicates += 1;
            return Ok(());
        }
        let mut industries: Vec<String> = f[8]
            .split('|')
            .filter_map(optional)
            .collect();
        industries.sort();
        industries.dedup();
        company_by_id.insert(id.clone(), parts.companies.len());
        parts.companies.push(Company {
            id,
            name: f[1].trim().to_string(),
            founded,
            closed,
            country: optional(f[5]),
            province: optional(f[6]),
            city: optional(f[7]),
            industries,
        });
        counts.loaded += 1;
        Ok(())
    });
    report.files.insert(REQUIRED_FILES[0].into(), counts);

    let mut counts = FileCounts::default();
    let mut round_by_id: HashMap<String, usize> = HashMap::new();
    rounds_t.for_each(&mut counts, |f, counts| {
        let id = optional(f[0]).ok_or(())?;
        let announced = required_date(f[3])?;
        let raised_usd = match optional(f[4]) {
            None => None,
            Some(s) => {
                let v: f64 = s.parse().map_err(|_| ())?;
                if !v.is_finite() || v < 0.0 {
                    return Err(());
                }
                Some(v)
            }
        };
        if round_by_id.contains_key(&id) {
            counts.duplicates += 1;
            return Ok(());
        }
        let Some(&company) = company_by_id.get(f[1].trim()) else {
            counts.dangling += 1;
            return Ok(());
        };
        round_by_id.insert(id.clone(), parts.rounds.len());
        parts.rounds.push(FundingRound {
            id,
            company,
            round_type: RoundType::parse(f[2]),
            announced,
            raised_usd,
            investors: Vec::new(),
        });
        counts.loaded += 1;
        Ok(())
    });
    report.files.insert(REQUIRED_FILES[1].into(), counts);

    let mut counts = FileCounts::default();
    let mut investor_by_id: HashMap<String, usize> = HashMap::new();
    investments.for_each(&mut counts, |f, counts| {
        let investor = optional(f[1]).ok_or(())?;
        let Some(&round) = round_by_id.get(f[0].trim()) else {
            counts.dangling += 1;
            return Ok(());
        };
        let next = investor_by_id.len();
        let inv = *investor_by_id.entry(investor.clone()).or_insert_with(|| {
            parts.investors.push(investor);
            next
        });
        let list = &mut parts.rounds[round].investors;
        if list.contains(&inv) {
            counts.duplicates += 1;
        } else {
            list.push(inv);
            counts.loaded += 1;
        }
        Ok(())
    });
    report.files.insert(REQUIRED_FILES[2].into(), counts);

    for (table, name, kind) in [
        (acquisitions, REQUIRED_FILES[3], ExitKind::Acquisition),
        (ipos, REQUIRED_FILES[4], ExitKind::Ipo),
    ] {
        let mut counts = FileCounts::default();
        let mut seen_ipo: HashSet<usize> = HashSet::new();
        table.for_each(&mut counts, |f, counts| {
            let date = required_date(f[1])?;
            let Some(&company) = company_by_id.get(f[0].trim()) else {
                counts.dangling += 1;
                return Ok(());
            };
            if kind == ExitKind::Ipo && !seen_ipo.insert(company) {
                counts.duplicates += 1;
                return Ok(());
            }
            parts.exits.push(ExitEvent {
                company,
                kind,
                date,
            });
            counts.loaded += 1;
            Ok(())
        });
        report.files.insert(name.into(), counts);
    }

    let mut counts = FileCounts::default();
    let mut founder_by_id: HashMap<String, usize> = HashMap::new();
    founders_t.for_each(&mut counts, |f, counts| {
        let person = optional(f[0]).ok_or(())?;
        let Some(&company) = company_by_id.get(f[1].trim()) else {
            counts.dangling += 1;
            return Ok(());
        };
        let next = parts.founders.len();
        let idx = *founder_by_id.entry(person.clone()).or_insert(next);
        if idx == next {
            parts.founders.push(FounderRecord {
                person_id: person,
                foundings: Vec::new(),
            });
        }
        let record = &mut parts.founders[idx];
        if record.foundings.contains(&company) {
            counts.duplicates += 1;
        } else {
            record.foundings.push(company);
            counts.loaded += 1;
        }
        Ok(())
    });
    report.files.insert(REQUIRED_FILES[5].into(), counts);

    let mut counts = FileCounts::default();
    news_t.for_each(&mut counts, |f, counts| {
        let date = required_date(f[1])?;
        let Some(&company) = company_by_id.get(f[0].trim()) else {
            counts.dangling += 1;
            return Ok(());
        };
        parts.news.push(NewsItem { company, date });
        counts.loaded += 1;
        Ok(())
    });
    report.files.insert(REQUIRED_FILES[6].into(), counts);

    Ok((EntityStore::from_parts(parts), report))
}
