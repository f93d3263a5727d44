//! Calendar helpers. Month quantities ignore the day of month.

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

/// `year * 12 + month` with a 1-based month.
pub fn month_index(date: NaiveDate) -> i64 {
    date.year() as i64 * 12 + date.month() as i64
}

/// Month-index difference `later - earlier`.
pub fn months_between(earlier: NaiveDate, later: NaiveDate) -> i64 {
    month_index(later) - month_index(earlier)
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::invalid(format!("bad date {s:?}: {e}")))
}

pub fn format_date(date: NaiveDate) -> String {
    date.format("%Y-%m-%d").to_string()
}

/// Last calendar day of the month that lies `months_ahead` months after `date`'s month.
pub fn end_of_month_after(date: NaiveDate, months_ahead: u32) -> NaiveDate {
    let idx = date.year() as i64 * 12 + (date.month0() as i64) + months_ahead as i64 + 1;
    let (y, m0) = (idx.div_euclid(12), idx.rem_euclid(12));
    NaiveDate::from_ymd_opt(y as i32, m0 as u32 + 1, 1)
        .and_then(|d| d.pred_opt())
        .expect("date in range")
}

pub fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}
