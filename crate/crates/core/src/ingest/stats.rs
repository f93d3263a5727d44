use serde::{Deserialize, Serialize};

use super::{EntityStore, RoundType};
use crate::dates::months_between;

/// Interval statistics for one consecutive lettered pair, e.g. Seed to A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub from: RoundType,
    pub to: RoundType,
    pub count: usize,
    pub mean_months: f64,
    pub median_months: f64,
    pub p90_months: f64,
    pub within_18_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalStats {
    pub rows: Vec<IntervalRow>,
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Months between the earliest round of each lettered stage and the
/// earliest round of the next stage, per company.
pub fn round_interval_stats(store: &EntityStore) -> IntervalStats {
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); 10];
    for c in 0..store.companies().len() {
        let mut first = [None; 11];
        for r in store.company_rounds(c) {
            if let Some(rank) = r.round_type.lettered_rank() {
                if first[rank].is_none() {
                    first[rank] = Some(r.announced);
                }
            }
        }
        for rank in 0..10 {
            if let (Some(a), Some(b)) = (first[rank], first[rank + 1]) {
                let months = months_between(a, b);
                if months >= 0 {
                    buckets[rank].push(months as f64);
                }
            }
        }
    }
    let rows = buckets
        .into_iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(rank, mut v)| {
            v.sort_by(f64::total_cmp);
            let n = v.len() as f64;
            IntervalRow {
                from: RoundType::from_lettered_rank(rank).expect("rank"),
                to: RoundType::from_lettered_rank(rank + 1).expect("rank"),
                count: v.len(),
                mean_months: v.iter().sum::<f64>() / n,
                median_months: percentile(&v, 0.5),
                p90_months: percentile(&v, 0.9),
                within_18_fraction: v.iter().filter(|&&m| m <= 18.0).count() as f64 / n,
            }
        })
        .collect();
    IntervalStats { rows }
}

impl IntervalStats {
    /// CSV in the column layout of the fundraising-interval table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "Funding round,Mean interval (months),Median interval (months),90th percentile (months),Within 18 months,Pairs\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{} -> {},{:.0},{:.0},{:.0},{:.2}%,{}\n",
                r.from.short_label(),
                r.to.short_label(),
                r.mean_months,
                r.median_months,
                r.p90_months,
                r.within_18_fraction * 100.0,
                r.count
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dates::ymd;
    use crate::ingest::{Company, FundingRound, StoreParts};

    fn store_with(rounds: &[(usize, RoundType, (i32, u32, u32))], n: usize) -> EntityStore {
        let companies = (0..n)
            .map(|i| Company {
                id: format!("c{i}"),
                name: String::new(),
                founded: Some(ymd(2000, 1, 1)),
                closed: None,
                country: None,
                province: None,
                city: None,
                industries: vec![],
            })
            .collect();
        let rounds = rounds
            .iter()
            .enumerate()
            .map(|(i, (c, t, (y, m, d)))| FundingRound {
                id: format!("r{i}"),
                company: *c,
                round_type: t.clone(),
                announced: ymd(*y, *m, *d),
                raised_usd: None,
                investors: vec![],
            })
            .collect();
        EntityStore::from_parts(StoreParts {
            companies,
            rounds,
            ..StoreParts::default()
        })
    }

    #[test]
    fn single_pair_statistics() {
        let store = store_with(
            &[(0, RoundType::Seed, (2010, 1, 15)), (0, RoundType::A, (2011, 7, 2))],
            1,
        );
        let stats = round_interval_stats(&store);
        assert_eq!(stats.rows.len(), 1);
        let row = &stats.rows[0];
        assert_eq!((row.from.clone(), row.to.clone()), (RoundType::Seed, RoundType::A));
        assert_eq!(row.mean_months, 18.0);
        assert_eq!(row.median_months, 18.0);
        assert_eq!(row.p90_months, 18.0);
        assert_eq!(row.within_18_fraction, 1.0);
    }

    #[test]
    fn empty_pair_classes_are_omitted() {
        let store = store_with(&[(0, RoundType::B, (2010, 1, 1)), (0, RoundType::C, (2012, 1, 1))], 1);
        let stats = round_interval_stats(&store);
        assert_eq!(stats.rows.len(), 1);
        assert_eq!(stats.rows[0].from, RoundType::B);
        assert_eq!(stats.rows[0].within_18_fraction, 0.0);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.5);
        assert!((percentile(&v, 0.9) - 3.7).abs() < 1e-12);
    }
}
