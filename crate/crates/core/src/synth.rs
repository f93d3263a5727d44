//! Seeded synthetic venture ecosystem with a planted logistic ground truth.
//!
//! Companies, founders, investors and news are laid out first. The
//! simulation then walks the window schedule (plus one trailing window
//! through the end of 2020): at each prediction moment it computes the
//! real factor vector of every eligible company, turns it into a latent
//! success probability, draws the label and writes the events that make
//! the label true (a follow-on round or an exit) or, for some failures,
//! a closure.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::dates::{format_date, ymd};
use crate::error::{Error, Result};
use crate::features::{Factor, FeatureConfig, FeatureEngine, FeatureVector};
use crate::ingest::{
    Company, EntityStore, ExitEvent, ExitKind, FounderRecord, FundingRound, NewsItem, RoundType,
    StoreParts,
};
use crate::trees::sigmoid;
use crate::windows::{eligible, window_schedule, TimeWindow};

/// Windows the generator simulates: the schedule plus one trailing window.
pub const SIM_WINDOWS: usize = 14;

/// Last date any generated event may carry.
pub fn simulation_end() -> NaiveDate {
    ymd(2020, 12, 31)
}

/// The simulated windows.
pub fn simulation_windows() -> Vec<TimeWindow> {
    let mut out = window_schedule();
    let next = out.last().expect("non-empty schedule").end.succ_opt().expect("date in range");
    out.push(TimeWindow::starting_at(out.len(), next));
    out
}

/// One factor's contribution to the latent logit:
/// `weight * (t(x) - center) / scale`, with `t = ln(1 + x)` when `log`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Effect {
    pub weight: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub log: bool,
}

fn one() -> f64 {
    1.0
}

impl Effect {
    fn term(&self, x: f64) -> f64 {
        let t = if self.log { x.max(0.0).ln_1p() } else { x };
        self.weight * (t - self.center) / self.scale
    }
}

/// A value per factor family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Families {
    /// Province and city.
    pub location: f64,
    /// Industry tags.
    pub industry: f64,
    /// Round amounts.
    pub amount: f64,
    /// Round investor lists.
    pub investors: f64,
    /// Founder histories.
    pub founders: f64,
}

impl Families {
    fn iter(&self) -> [(&'static str, f64); 5] {
        [
            ("location", self.location),
            ("industry", self.industry),
            ("amount", self.amount),
            ("investors", self.investors),
            ("founders", self.founders),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_companies: usize,
    /// Inclusive range of founding years.
    pub year_range: [i32; 2],
    pub n_investors: usize,
    /// Size of the founder pool; people never drawn are not emitted.
    pub n_founders: usize,
    /// Mean latent success probability per window.
    pub success_rate: f64,
    /// Optional per-window override of `success_rate`, one per simulated window.
    pub window_rates: Vec<f64>,
    /// Solve each window's intercept so the mean latent probability over
    /// eligible companies equals the window rate. Otherwise the intercept
    /// is the logit of the rate and effects move the realised mean.
    pub calibrate_intercept: bool,
    /// Keyed by factor name.
    pub effects: BTreeMap<String, Effect>,
    /// Per-family probability that a record lacks the family's data.
    pub missingness: Families,
    /// Adds `missing_effects` to the logit of companies whose family is missing.
    pub informative_missingness: bool,
    pub missing_effects: Families,
    /// Share of companies that ever raise a first round.
    pub funded_fraction: f64,
    /// Share of successes that are exits rather than follow-on rounds.
    pub exit_share: f64,
    /// Probability that a company without success closes in the window.
    pub failure_close_rate: f64,
    /// Mean news items per company-month.
    pub news_rate: f64,
    pub seed: u64,
}

fn effect(weight: f64, center: f64, scale: f64, log: bool) -> Effect {
    Effect {
        weight,
        center,
        scale,
        log,
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        let effects = [
            (Factor::CompanyAgeMonths, effect(-0.5, 3.8, 0.8, true)),
            (Factor::MonthlyAvgNews, effect(0.7, 0.05, 0.05, true)),
            (Factor::ProvinceProsperity, effect(0.1, 6.0, 1.2, true)),
            (Factor::CityProsperity, effect(0.2, 5.0, 1.2, true)),
            (Factor::MaxIndustryProsperityCity, effect(0.15, 3.0, 1.2, true)),
            (Factor::NumFundingRounds, effect(0.5, 2.0, 1.5, false)),
            (Factor::TotalRaisedUsd, effect(0.4, 15.5, 1.5, true)),
            (Factor::MeanInvestorIpoFraction, effect(0.4, 0.03, 0.03, false)),
            (Factor::MaxInvestorAcqFraction, effect(0.3, 0.15, 0.1, false)),
            (Factor::MeanFounderFailFraction, effect(-0.5, 0.3, 0.4, false)),
        ]
        .into_iter()
        .map(|(f, e)| (f.name().to_string(), e))
        .collect();
        SynthConfig {
            n_companies: 20_000,
            year_range: [1990, 2018],
            n_investors: 2_000,
            n_founders: 40_000,
            success_rate: 0.24,
            window_rates: Vec::new(),
            calibrate_intercept: true,
            effects,
            missingness: Families {
                location: 0.1,
                industry: 0.1,
                amount: 0.2,
                investors: 0.2,
                founders: 0.6,
            },
            informative_missingness: false,
            missing_effects: Families {
                location: -0.3,
                industry: -0.3,
                amount: -0.6,
                investors: -0.8,
                founders: -1.0,
            },
            funded_fraction: 0.8,
            exit_share: 0.15,
            failure_close_rate: 0.15,
            news_rate: 0.05,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<SynthConfig> {
        let cfg: SynthConfig =
            toml::from_str(text).map_err(|e| Error::invalid(format!("synth config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_companies == 0 {
            return Err(Error::invalid("n_companies must be positive"));
        }
        if self.n_investors == 0 || self.n_founders == 0 {
            return Err(Error::invalid("n_investors and n_founders must be positive"));
        }
        let [lo, hi] = self.year_range;
        if !(1990..=2020).contains(&lo) || !(1990..=2020).contains(&hi) || lo > hi {
            return Err(Error::invalid(format!(
                "year_range [{lo}, {hi}] must be ordered within [1990, 2020]"
            )));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("funded_fraction", self.funded_fraction)?;
        unit("exit_share", self.exit_share)?;
        unit("failure_close_rate", self.failure_close_rate)?;
        for (name, v) in self.missingness.iter() {
            unit(&format!("missingness.{name}"), v)?;
        }
        let open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} outside (0, 1)")))
            }
        };
        open("success_rate", self.success_rate)?;
        if !self.window_rates.is_empty() && self.window_rates.len() != SIM_WINDOWS {
            return Err(Error::invalid(format!(
                "window_rates needs {SIM_WINDOWS} entries, got {}",
                self.window_rates.len()
            )));
        }
        for &r in &self.window_rates {
            open("window_rates entry", r)?;
        }
        if !(self.news_rate >= 0.0 && self.news_rate.is_finite()) {
            return Err(Error::invalid("news_rate must be a non-negative number"));
        }
        for (name, e) in &self.effects {
            if Factor::from_name(name).is_none() {
                return Err(Error::invalid(format!("unknown factor in effects: {name}")));
            }
            if e.scale.is_nan() || e.scale <= 0.0 || !e.weight.is_finite() || !e.center.is_finite() {
                return Err(Error::invalid(format!("effect {name} needs finite values and scale > 0")));
            }
        }
        Ok(())
    }

    fn window_rate(&self, w: usize) -> f64 {
        self.window_rates.get(w).copied().unwrap_or(self.success_rate)
    }

    /// Rates swinging around `success_rate` by `amplitude` over the windows.
    pub fn with_rate_cycle(mut self, amplitude: f64) -> SynthConfig {
        self.window_rates = (0..SIM_WINDOWS)
            .map(|w| self.success_rate + amplitude * (w as f64 * std::f64::consts::TAU / 6.0).sin())
            .collect();
        self
    }

    /// Every missingness rate set to zero.
    pub fn without_missingness(mut self) -> SynthConfig {
        self.missingness = Families::default();
        self
    }
}

/// Latent probability of one eligible company in one simulated window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRow {
    pub company_id: String,
    pub window_index: usize,
    pub latent_probability: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rows: Vec<LatentRow>,
    /// Logit intercept used in each simulated window.
    pub intercepts: Vec<f64>,
}

impl GroundTruth {
    pub fn lookup(&self) -> HashMap<(String, usize), f64> {
        self.rows
            .iter()
            .map(|r| ((r.company_id.clone(), r.window_index), r.latent_probability))
            .collect()
    }

    pub fn window_mean(&self, window_index: usize) -> Option<f64> {
        let ps: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.window_index == window_index)
            .map(|r| r.latent_probability)
            .collect();
        (!ps.is_empty()).then(|| ps.iter().sum::<f64>() / ps.len() as f64)
    }
}

pub fn write_ground_truth(truth: &GroundTruth, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["company_id", "window_index", "latent_probability"])?;
    for r in &truth.rows {
        w.write_record([
            r.company_id.clone(),
            r.window_index.to_string(),
            r.latent_probability.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(GroundTruth {
        rows,
        intercepts: Vec::new(),
    })
}

/// Logit contribution of the configured effects, without the intercept.
pub fn linear_predictor(cfg: &SynthConfig, v: &FeatureVector) -> f64 {
    let mut eta = 0.0;
    for (name, e) in &cfg.effects {
        let f = Factor::from_name(name).expect("validated factor name");
        if let Some(x) = v.get(f) {
            eta += e.term(x);
        }
    }
    if cfg.informative_missingness {
        let m = &cfg.missing_effects;
        for (factor, shift) in [
            (Factor::ProvinceProsperity, m.location),
            (Factor::MeanIndustryProsperityProvince, m.industry),
            (Factor::TotalRaisedUsd, m.amount),
            (Factor::MeanInvestorIpoFraction, m.investors),
            (Factor::MeanFounderFailFraction, m.founders),
        ] {
            if v.get(factor).is_none() {
                eta += shift;
            }
        }
    }
    eta
}

/// Intercept `a` with `mean(sigmoid(a + eta)) = rate`.
fn calibrate(etas: &[f64], rate: f64) -> f64 {
    if etas.is_empty() {
        return (rate / (1.0 - rate)).ln();
    }
    let mean = |a: f64| etas.iter().map(|&e| sigmoid(a + e)).sum::<f64>() / etas.len() as f64;
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const COUNTRIES: [(&str, f64); 8] = [
    ("USA", 10.0),
    ("CHN", 4.0),
    ("GBR", 3.0),
    ("IND", 3.0),
    ("DEU", 2.0),
    ("FRA", 2.0),
    ("CAN", 1.5),
    ("ISR", 1.0),
];
const REGIONS_PER_COUNTRY: usize = 6;
const CITIES_PER_REGION: usize = 4;
const N_TAGS: usize = 40;
/// Founding years at the start of the range whose companies never raise;
/// their founders give later companies a history.
const HISTORY_YEARS: i32 = 2;

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|i| 1.0 / (i as f64 + 1.0).powf(s))).expect("positive weights")
}

fn uniform_date(rng: &mut ChaCha8Rng, from: NaiveDate, to: NaiveDate) -> NaiveDate {
    let span = (to - from).num_days().max(0);
    from + Duration::days(rng.random_range(0..=span))
}

fn first_round_type(rng: &mut ChaCha8Rng) -> RoundType {
    let u: f64 = rng.random();
    match u {
        u if u < 0.15 => RoundType::PreSeed,
        u if u < 0.60 => RoundType::Seed,
        u if u < 0.75 => RoundType::A,
        u if u < 0.85 => RoundType::Convertible,
        u if u < 0.92 => RoundType::NonEquity,
        _ => RoundType::Debt,
    }
}

fn next_round_type(prev: &RoundType, rng: &mut ChaCha8Rng) -> RoundType {
    if rng.random_bool(0.08) {
        return if rng.random_bool(0.5) {
            RoundType::Debt
        } else {
            RoundType::OtherEquity
        };
    }
    match prev.lettered_rank() {
        Some(r) => RoundType::from_lettered_rank((r + 1).min(10)).expect("rank in range"),
        None if rng.random_bool(0.6) => RoundType::Seed,
        None => RoundType::A,
    }
}

fn typical_amount(t: &RoundType) -> f64 {
    match t {
        RoundType::PreSeed => 3e5,
        RoundType::Seed => 1.5e6,
        RoundType::Convertible | RoundType::NonEquity => 5e5,
        RoundType::Debt | RoundType::OtherEquity => 3e6,
        t => 4e6 * 2.5f64.powi(t.lettered_rank().unwrap_or(1) as i32 - 1),
    }
}

struct Sampler<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    investor_pick: WeightedIndex<f64>,
    investor_quality: Vec<f64>,
}

impl Sampler<'_> {
    fn round(
        &mut self,
        id: String,
        company: usize,
        round_type: RoundType,
        announced: NaiveDate,
    ) -> FundingRound {
        let rng = &mut self.rng;
        let raised_usd = if rng.random_bool(self.cfg.missingness.amount) {
            None
        } else {
            let noise = LogNormal::new(0.0, 0.8).expect("valid").sample(rng);
            Some((typical_amount(&round_type) * noise).round().max(1000.0))
        };
        let mut investors = Vec::new();
        if !rng.random_bool(self.cfg.missingness.investors) {
            let k = 1 + usize::from(rng.random_bool(0.5)) + usize::from(rng.random_bool(0.25));
            while investors.len() < k.min(self.investor_quality.len()) {
                let j = self.investor_pick.sample(rng);
                if !investors.contains(&j) {
                    investors.push(j);
                }
            }
        }
        FundingRound {
            id,
            company,
            round_type,
            announced,
            raised_usd,
            investors,
        }
    }
}

/// Generates the store and the latent probabilities behind every label.
pub fn generate(cfg: &SynthConfig) -> Result<(EntityStore, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let end = simulation_end();
    let [lo, hi] = cfg.year_range;
    let last_founding = ymd(hi, 12, 31).min(end - Duration::days(1));

    // founding dates, weighted toward later years
    let years: Vec<i32> = (lo..=hi).collect();
    let year_pick = WeightedIndex::new(years.iter().map(|&y| 1.0 + 0.15 * f64::from(y - lo)))
        .expect("positive weights");
    let mut founded: Vec<NaiveDate> = (0..cfg.n_companies)
        .map(|_| {
            let y = years[year_pick.sample(&mut rng)];
            uniform_date(&mut rng, ymd(y, 1, 1), ymd(y, 12, 31).min(last_founding))
        })
        .collect();
    founded.sort_unstable();
    let history_end = ymd(lo + HISTORY_YEARS, 1, 1);
    let has_history = lo + HISTORY_YEARS <= hi;

    // places and tags
    let country_pick = WeightedIndex::new(COUNTRIES.iter().map(|c| c.1)).expect("positive weights");
    let region_pick = zipf(REGIONS_PER_COUNTRY, 1.0);
    let city_pick = zipf(CITIES_PER_REGION, 1.0);
    let tag_pick = zipf(N_TAGS, 0.8);
    let mut companies = Vec::with_capacity(cfg.n_companies);
    for (i, &f) in founded.iter().enumerate() {
        let country = COUNTRIES[country_pick.sample(&mut rng)].0;
        let (province, city) = if rng.random_bool(cfg.missingness.location) {
            (None, None)
        } else {
            let r = region_pick.sample(&mut rng);
            let c = city_pick.sample(&mut rng);
            (
                Some(format!("{country}-R{r}")),
                Some(format!("{country}-R{r}-C{c}")),
            )
        };
        let mut industries = Vec::new();
        if !rng.random_bool(cfg.missingness.industry) {
            let k = 1 + usize::from(rng.random_bool(0.5)) + usize::from(rng.random_bool(0.2));
            while industries.len() < k {
                let t = format!("tag-{:02}", tag_pick.sample(&mut rng));
                if !industries.contains(&t) {
                    industries.push(t);
                }
            }
            industries.sort();
        }
        companies.push(Company {
            id: format!("c{i:07}"),
            name: format!("Company {i:07}"),
            founded: Some(f),
            closed: None,
            country: Some(country.to_string()),
            province,
            city,
            industries,
        });
    }

    // founders: the first slot of a company outside the history years is a
    // person with an earlier founding unless the founder family is missing
    let mut foundings: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_founders];
    let mut company_founders: Vec<Vec<usize>> = Vec::with_capacity(cfg.n_companies);
    let mut experienced: Vec<usize> = Vec::new();
    let mut next_fresh = 0usize;
    let mut settled = 0usize;
    for i in 0..cfg.n_companies {
        while settled < i && founded[settled] < founded[i] {
            for &p in &company_founders[settled] {
                if foundings[p].first() == Some(&settled) {
                    experienced.push(p);
                }
            }
            settled += 1;
        }
        let k = 1 + usize::from(rng.random_bool(0.4)) + usize::from(rng.random_bool(0.15));
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        let history_company = has_history && founded[i] < history_end;
        if !history_company && !experienced.is_empty() && !rng.random_bool(cfg.missingness.founders)
        {
            chosen.push(experienced[rng.random_range(0..experienced.len())]);
        }
        while chosen.len() < k {
            let p = if next_fresh < cfg.n_founders {
                next_fresh += 1;
                next_fresh - 1
            } else {
                rng.random_range(0..cfg.n_founders)
            };
            if chosen.contains(&p) {
                if chosen.len() >= cfg.n_founders {
                    break;
                }
                continue;
            }
            chosen.push(p);
        }
        for &p in &chosen {
            foundings[p].push(i);
        }
        company_founders.push(chosen);
    }
    let founders: Vec<FounderRecord> = foundings
        .into_iter()
        .enumerate()
        .filter(|(_, list)| !list.is_empty())
        .map(|(p, list)| FounderRecord {
            person_id: format!("p{p:07}"),
            foundings: list,
        })
        .collect();

    // investors with a latent quality that drives their exits
    let quality_dist = Beta::new(2.0, 6.0).expect("valid");
    let investor_quality: Vec<f64> = (0..cfg.n_investors).map(|_| quality_dist.sample(&mut rng)).collect();
    let investor_pick = WeightedIndex::new((0..cfg.n_investors).map(|j| 1.0 / (j as f64 + 20.0).powf(0.8)))
        .expect("positive weights");

    // news as a per-company Poisson process
    let mut news = Vec::new();
    let intensity = Normal::<f64>::new(0.0, 0.8).expect("valid");
    for (i, &f) in founded.iter().enumerate() {
        let per_day = cfg.news_rate * intensity.sample(&mut rng).exp() * 12.0 / 365.25;
        if per_day <= 0.0 {
            continue;
        }
        let gap = Exp::new(per_day).expect("positive rate");
        let mut t = f;
        loop {
            let step = gap.sample(&mut rng).ceil().max(1.0);
            if step > (end - t).num_days() as f64 {
                break;
            }
            t += Duration::days(step as i64);
            news.push(NewsItem { company: i, date: t });
        }
    }

    let mut sampler = Sampler {
        cfg,
        rng,
        investor_pick,
        investor_quality,
    };

    // first rounds, and closures of companies that never raise
    let mut rounds = Vec::new();
    let delay = Exp::new(1.0 / 540.0).expect("positive rate");
    for i in 0..cfg.n_companies {
        let f = founded[i];
        let history_company = has_history && f < history_end;
        let rng = &mut sampler.rng;
        let mut first = None;
        if !history_company && rng.random_bool(cfg.funded_fraction) {
            let d = f + Duration::days(1 + delay.sample(rng) as i64);
            if d <= end {
                first = Some(d);
            }
        }
        match first {
            Some(d) => {
                let t = first_round_type(rng);
                let id = format!("r{:08}", rounds.len());
                rounds.push(sampler.round(id, i, t, d));
            }
            None => {
                if rng.random_bool(0.5) {
                    let c = f + Duration::days(rng.random_range(180..=2920));
                    if c <= end {
                        companies[i].closed = Some(c);
                    }
                }
            }
        }
    }

    let mut parts = StoreParts {
        companies,
        investors: (0..cfg.n_investors).map(|j| format!("i{j:06}")).collect(),
        rounds,
        exits: Vec::new(),
        founders,
        news,
    };

    let features_cfg = FeatureConfig::default();
    let mut truth = GroundTruth::default();
    for w in simulation_windows() {
        let store = EntityStore::from_parts(parts);
        let engine = FeatureEngine::new(&store, features_cfg);
        let snap = engine.snapshot(w.start);
        let pool: Vec<usize> = (0..cfg.n_companies).filter(|&c| eligible(&store, c, w.start)).collect();
        let etas: Vec<f64> = pool
            .iter()
            .map(|&c| linear_predictor(cfg, &engine.features(c, &snap)))
            .collect();
        let rate = cfg.window_rate(w.index);
        let intercept = if cfg.calibrate_intercept {
            calibrate(&etas, rate)
        } else {
            (rate / (1.0 - rate)).ln()
        };
        truth.intercepts.push(intercept);

        enum Outcome {
            Round(usize, RoundType, NaiveDate),
            Exit(usize, ExitKind, NaiveDate),
            Close(usize, NaiveDate),
        }
        let mut outcomes = Vec::new();
        for (&c, &eta) in pool.iter().zip(&etas) {
            let p = sigmoid(intercept + eta);
            truth.rows.push(LatentRow {
                company_id: store.company(c).id.clone(),
                window_index: w.index,
                latent_probability: p,
            });
            let rng = &mut sampler.rng;
            let date = uniform_date(rng, w.start, w.end.min(end));
            if rng.random_bool(p) {
                if rng.random_bool(cfg.exit_share) {
                    let qs: Vec<f64> = store
                        .company_rounds(c)
                        .flat_map(|r| r.investors.iter().map(|&j| sampler.investor_quality[j]))
                        .collect();
                    let q = if qs.is_empty() {
                        0.1
                    } else {
                        qs.iter().sum::<f64>() / qs.len() as f64
                    };
                    let kind = if rng.random_bool(q.clamp(0.0, 1.0)) {
                        ExitKind::Ipo
                    } else {
                        ExitKind::Acquisition
                    };
                    outcomes.push(Outcome::Exit(c, kind, date));
                } else {
                    let prev = store.company_rounds(c).last().expect("eligible is funded").round_type.clone();
                    outcomes.push(Outcome::Round(c, next_round_type(&prev, rng), date));
                }
            } else if rng.random_bool(cfg.failure_close_rate) {
                outcomes.push(Outcome::Close(c, date));
            }
        }
        parts = store.into_parts();
        for o in outcomes {
            match o {
                Outcome::Round(c, t, d) => {
                    let id = format!("r{:08}", parts.rounds.len());
                    let r = sampler.round(id, c, t, d);
                    parts.rounds.push(r);
                }
                Outcome::Exit(c, kind, date) => parts.exits.push(ExitEvent { company: c, kind, date }),
                Outcome::Close(c, d) => parts.companies[c].closed = Some(d),
            }
        }
    }
    Ok((EntityStore::from_parts(canonicalize(parts)), truth))
}

/// Reorders parts the way a load of their export would: investors by first
/// appearance (unused ones dropped), acquisitions before IPOs, and founder
/// records without foundings dropped.
pub fn canonicalize(mut parts: StoreParts) -> StoreParts {
    let mut remap: Vec<Option<usize>> = vec![None; parts.investors.len()];
    let mut investors = Vec::new();
    for r in &mut parts.rounds {
        for j in &mut r.investors {
            let new = *remap[*j].get_or_insert_with(|| {
                investors.push(parts.investors[*j].clone());
                investors.len() - 1
            });
            *j = new;
        }
    }
    parts.investors = investors;
    let (acq, ipo): (Vec<ExitEvent>, Vec<ExitEvent>) =
        parts.exits.into_iter().partition(|e| e.kind == ExitKind::Acquisition);
    parts.exits = acq.into_iter().chain(ipo).collect();
    parts.founders.retain(|f| !f.foundings.is_empty());
    parts
}

fn opt(s: &Option<String>) -> &str {
    s.as_deref().unwrap_or("")
}

fn writer(dir: &Path, file: &str) -> Result<csv::Writer<File>> {
    let path = dir.join(file);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn finish(mut w: csv::Writer<File>, dir: &Path, file: &str) -> Result<()> {
    w.flush().map_err(|e| Error::io(dir.join(file), e))
}

/// Writes the seven export files `load_export` reads.
pub fn emit_export(store: &EntityStore, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let parts = store.parts();

    let file = "organizations.csv";
    let mut w = writer(dir, file)?;
    w.write_record([
        "uuid",
        "name",
        "founded_on",
        "closed_on",
        "status",
        "country",
        "region",
        "city",
        "category_list",
    ])?;
    for (i, c) in parts.companies.iter().enumerate() {
        let status = match store.company_exits(i).next() {
            Some(e) if e.kind == ExitKind::Ipo => "ipo",
            Some(_) => "acquired",
            None if c.closed.is_some() => "closed",
            None => "operating",
        };
        w.write_record([
            c.id.as_str(),
            c.name.as_str(),
            &c.founded.map(format_date).unwrap_or_default(),
            &c.closed.map(format_date).unwrap_or_default(),
            status,
            opt(&c.country),
            opt(&c.province),
            opt(&c.city),
            &c.industries.join("|"),
        ])?;
    }
    finish(w, dir, file)?;

    let file = "funding_rounds.csv";
    let mut w = writer(dir, file)?;
    w.write_record(["uuid", "org_uuid", "investment_type", "announced_on", "raised_amount_usd"])?;
    for r in &parts.rounds {
        w.write_record([
            r.id.as_str(),
            parts.companies[r.company].id.as_str(),
            r.round_type.export_str(),
            &format_date(r.announced),
            &r.raised_usd.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    finish(w, dir, file)?;

    let file = "investments.csv";
    let mut w = writer(dir, file)?;
    w.write_record(["funding_round_uuid", "investor_uuid"])?;
    for r in &parts.rounds {
        for &j in &r.investors {
            w.write_record([r.id.as_str(), parts.investors[j].as_str()])?;
        }
    }
    finish(w, dir, file)?;

    for (file, kind, header) in [
        ("acquisitions.csv", ExitKind::Acquisition, ["acquiree_uuid", "acquired_on"]),
        ("ipos.csv", ExitKind::Ipo, ["org_uuid", "went_public_on"]),
    ] {
        let mut w = writer(dir, file)?;
        w.write_record(header)?;
        for e in parts.exits.iter().filter(|e| e.kind == kind) {
            w.write_record([parts.companies[e.company].id.as_str(), &format_date(e.date)])?;
        }
        finish(w, dir, file)?;
    }

    let file = "founders.csv";
    let mut w = writer(dir, file)?;
    w.write_record(["person_uuid", "org_uuid"])?;
    for f in &parts.founders {
        for &c in &f.foundings {
            w.write_record([f.person_id.as_str(), parts.companies[c].id.as_str()])?;
        }
    }
    finish(w, dir, file)?;

    let file = "news.csv";
    let mut w = writer(dir, file)?;
    w.write_record(["org_uuid", "posted_on"])?;
    for n in &parts.news {
        w.write_record([parts.companies[n.company].id.as_str(), &format_date(n.date)])?;
    }
    finish(w, dir, file)
}

/// Founding year of every company, for quick summaries.
pub fn founding_years(store: &EntityStore) -> BTreeMap<i32, usize> {
    let mut out = BTreeMap::new();
    for c in store.companies() {
        if let Some(f) = c.founded {
            *out.entry(f.year()).or_insert(0) += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::feature_matrix;
    use crate::ingest::{filter_companies, load_export};
    use crate::windows::build_samples;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_companies: 1500,
            n_investors: 150,
            n_founders: 3000,
            seed,
            ..SynthConfig::default()
        }
    }

    fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect()
    }

    #[test]
    fn same_seed_same_export() {
        let (a, ta) = generate(&small(7)).unwrap();
        let (b, tb) = generate(&small(7)).unwrap();
        assert_eq!(ta, tb);
        let da = tempfile::tempdir().unwrap();
        let db = tempfile::tempdir().unwrap();
        emit_export(&a, da.path()).unwrap();
        emit_export(&b, db.path()).unwrap();
        assert_eq!(read_dir(da.path()), read_dir(db.path()));
        let (c, _) = generate(&small(8)).unwrap();
        assert_ne!(a.parts(), c.parts());
    }

    #[test]
    fn export_round_trips() {
        let (store, _) = generate(&small(3)).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        emit_export(&store, d1.path()).unwrap();
        let names: Vec<String> = read_dir(d1.path()).into_keys().collect();
        let mut required: Vec<String> = crate::ingest::REQUIRED_FILES.iter().map(|s| s.to_string()).collect();
        required.sort();
        assert_eq!(names, required);
        let (loaded, report) = load_export(d1.path()).unwrap();
        assert_eq!(report.warnings(), 0);
        assert_eq!(loaded.parts(), store.parts());
        let d2 = tempfile::tempdir().unwrap();
        emit_export(&loaded, d2.path()).unwrap();
        assert_eq!(read_dir(d1.path()), read_dir(d2.path()));
        let (filtered, rep) = filter_companies(&loaded);
        assert_eq!(rep.companies_after, rep.companies_before);
        assert_eq!(filtered.parts(), store.parts());
    }

    #[test]
    fn rounds_follow_founding() {
        let (store, _) = generate(&small(5)).unwrap();
        for r in store.rounds() {
            let f = store.company(r.company).founded.unwrap();
            assert!(r.announced >= f);
            assert!(r.announced <= simulation_end());
        }
        for e in store.exits() {
            assert!(e.date > store.company(e.company).founded.unwrap());
        }
    }

    #[test]
    fn labels_come_from_latent_draws() {
        let (store, truth) = generate(&small(11)).unwrap();
        let lookup = truth.lookup();
        let samples = build_samples(&store);
        assert!(!samples.is_empty());
        for s in &samples {
            assert!(lookup.contains_key(&(s.company_id.clone(), s.window.index)));
        }
        let in_schedule = truth.rows.iter().filter(|r| r.window_index < 13).count();
        assert_eq!(in_schedule, samples.len());
    }

    #[test]
    fn zero_missingness_fills_every_cell() {
        let cfg = SynthConfig {
            n_companies: 800,
            ..small(2).without_missingness()
        };
        let (store, _) = generate(&cfg).unwrap();
        let samples = build_samples(&store);
        assert!(samples.len() > 100);
        let data = feature_matrix(&store, &samples, &FeatureConfig::default());
        assert!(!data.has_missing());
    }

    #[test]
    fn calibrated_windows_hit_their_rate() {
        let cfg = small(4).with_rate_cycle(0.08);
        let (_, truth) = generate(&cfg).unwrap();
        for w in 0..SIM_WINDOWS {
            if let Some(m) = truth.window_mean(w) {
                assert!((m - cfg.window_rate(w)).abs() < 1e-9, "window {w}");
            }
        }
    }

    #[test]
    fn raising_a_positive_effect_raises_the_rate() {
        let base = SynthConfig {
            calibrate_intercept: false,
            ..small(9)
        };
        let mut boosted = base.clone();
        boosted.effects.insert(
            Factor::NumFundingRounds.name().into(),
            effect(1.5, 0.0, 1.5, false),
        );
        let mut plain = base.clone();
        plain.effects.insert(
            Factor::NumFundingRounds.name().into(),
            effect(0.5, 0.0, 1.5, false),
        );
        let rate = |cfg: &SynthConfig| {
            let (store, _) = generate(cfg).unwrap();
            let s = build_samples(&store);
            s.iter().filter(|s| s.label == 1).count() as f64 / s.len() as f64
        };
        assert!(rate(&boosted) > rate(&plain));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate(&SynthConfig { n_companies: 0, ..small(1) }).is_err());
        assert!(generate(&SynthConfig { year_range: [1980, 2000], ..small(1) }).is_err());
        let mut bad = small(1);
        bad.missingness.amount = 1.5;
        assert!(bad.validate().is_err());
        let mut bad = small(1);
        bad.effects.insert("nope".into(), effect(1.0, 0.0, 1.0, false));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_reads_toml() {
        let cfg = SynthConfig::from_toml(
            "n_companies = 10\nseed = 3\n[missingness]\namount = 0.5\n[effects.company_age_months]\nweight = -1.0\n",
        )
        .unwrap();
        assert_eq!(cfg.n_companies, 10);
        assert_eq!(cfg.missingness.amount, 0.5);
        assert_eq!(cfg.missingness.location, 0.0);
        assert_eq!(cfg.effects.len(), 1);
        assert!(SynthConfig::from_toml("n_compnies = 3").is_err());
    }
}
