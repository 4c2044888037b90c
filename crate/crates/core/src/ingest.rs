//! Case/death feeds and population-density tables.
//!
//! Two feed schemas are read:
//!
//! * canonical: `date,country_code,region,new_cases,new_deaths` with ISO dates;
//! * ECDC legacy: `dateRep` (`DD/MM/YYYY`), `cases`, `deaths`,
//!   `countryterritoryCode`, `continentExp`, with Asia and Oceania merged.
//!
//! A blank count field means "no report that day". [`prepare_region`] treats
//! it like a missing row (zero), while [`panel_from_records`] uses the first
//! non-blank value as the unit's start.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Panel, Region, UnitSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    Canonical,
    Ecdc,
}

impl FromStr for Schema {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(Schema::Canonical),
            "ecdc" => Ok(Schema::Ecdc),
            other => Err(format!("unknown schema `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawRecord {
    pub date: NaiveDate,
    pub country_code: String,
    pub region: Region,
    pub new_cases: Option<f64>,
    pub new_deaths: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRecord {
    pub country_code: String,
    /// People per square kilometre.
    pub density: f64,
}

/// Parsed feed plus counts of silently dropped rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Feed {
    pub records: Vec<RawRecord>,
    pub dropped_region: usize,
    pub dropped_code: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Infection,
    Death,
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "infection" => Ok(Measure::Infection),
            "death" => Ok(Measure::Death),
            other => Err(format!("unknown measure `{other}`")),
        }
    }
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Infection => "infection",
            Measure::Death => "death",
        }
    }

    fn of(self, r: &RawRecord) -> Option<f64> {
        match self {
            Measure::Infection => r.new_cases,
            Measure::Death => r.new_deaths,
        }
    }
}

pub fn load_feed(path: impl AsRef<Path>, schema: Schema) -> Result<Feed> {
    parse_feed(File::open(path)?, schema)
}

struct Columns {
    date: usize,
    code: usize,
    region: usize,
    cases: usize,
    deaths: usize,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn ecdc_region(continent: &str) -> Option<Region> {
    match continent {
        "Africa" => Some(Region::Africa),
        "America" => Some(Region::America),
        "Asia" | "Oceania" => Some(Region::AsiaOceania),
        "Europe" => Some(Region::Europe),
        _ => None,
    }
}

pub fn parse_feed<R: Read>(reader: R, schema: Schema) -> Result<Feed> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names = match schema {
        Schema::Canonical => ["date", "country_code", "region", "new_cases", "new_deaths"],
        Schema::Ecdc => ["dateRep", "countryterritoryCode", "continentExp", "cases", "deaths"],
    };
    let cols = Columns {
        date: column(&headers, names[0])?,
        code: column(&headers, names[1])?,
        region: column(&headers, names[2])?,
        cases: column(&headers, names[3])?,
        deaths: column(&headers, names[4])?,
    };
    let date_format = match schema {
        Schema::Canonical => "%Y-%m-%d",
        Schema::Ecdc => "%d/%m/%Y",
    };

    let mut feed = Feed::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Row { line, message };
        let raw_date = &row[cols.date];
        let date = NaiveDate::parse_from_str(raw_date, date_format)
            .map_err(|_| bad(format!("malformed date `{raw_date}`")))?;
        let region = match schema {
            Schema::Canonical => row[cols.region].parse::<Region>().ok(),
            Schema::Ecdc => ecdc_region(&row[cols.region]),
        };
        let Some(region) = region else {
            feed.dropped_region += 1;
            continue;
        };
        let code = row[cols.code].to_string();
        if code.is_empty() {
            feed.dropped_code += 1;
            continue;
        }
        let count = |k: usize, what: &str| -> Result<Option<f64>> {
            let s = &row[k];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| bad(format!("malformed {what} `{s}`")))
        };
        feed.records.push(RawRecord {
            date,
            country_code: code,
            region,
            new_cases: count(cols.cases, "case count")?,
            new_deaths: count(cols.deaths, "death count")?,
        });
    }
    if feed.dropped_region > 0 {
        log::warn!("dropped {} rows with an unmappable region", feed.dropped_region);
    }
    if feed.dropped_code > 0 {
        log::warn!("dropped {} rows without a country code", feed.dropped_code);
    }
    Ok(feed)
}

pub fn load_densities(path: impl AsRef<Path>) -> Result<Vec<DensityRecord>> {
    parse_densities(File::open(path)?)
}

/// Rows with an empty density are skipped.
pub fn parse_densities<R: Read>(reader: R) -> Result<Vec<DensityRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let code = column(&headers, "country_code")?;
    let dens = column(&headers, "density")?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let raw = &row[dens];
        if raw.is_empty() {
            continue;
        }
        let density: f64 = raw.parse().map_err(|_| Error::Row {
            line,
            message: format!("malformed density `{raw}`"),
        })?;
        if !(density > 0.0 && density.is_finite()) {
            return Err(Error::Row {
                line,
                message: format!("density must be positive, got {density}"),
            });
        }
        out.push(DensityRecord {
            country_code: row[code].to_string(),
            density,
        });
    }
    Ok(out)
}

/// Per-date `(cases, deaths)` of one unit.
type Days = BTreeMap<NaiveDate, (Option<f64>, Option<f64>)>;

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOptions {
    pub region: Region,
    pub measure: Measure,
    /// Days dropped from the start of the region's span.
    pub trim_days: usize,
    /// Minimum cumulative deaths at the cutoff (death measure only).
    pub death_threshold: f64,
    /// Last day of the span; defaults to the last date in the feed.
    pub cutoff: Option<NaiveDate>,
}

impl PrepareOptions {
    pub fn new(region: Region, measure: Measure) -> Self {
        PrepareOptions {
            region,
            measure,
            trim_days: 30,
            death_threshold: 20.0,
            cutoff: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRegion {
    pub region: Region,
    pub measure: Measure,
    /// Sorted by unit id; all share `time_labels`.
    pub series: Vec<UnitSeries>,
    pub time_labels: Vec<NaiveDate>,
    /// Raw count on the final day, aligned with `series`.
    pub final_counts: Vec<f64>,
    pub duplicates: usize,
    pub excluded_no_density: Vec<String>,
    pub excluded_deaths: Vec<String>,
    pub excluded_not_started: Vec<String>,
}

/// Filters one region and aligns its units on a common span.
///
/// The span opens at the region's first positive count of the chosen
/// measure, drops its first `trim_days` days and closes at the cutoff. A
/// unit starts at its own first positive count (clamped to the span).
/// Units are excluded when they lack a density record (only if `densities`
/// is given), fall below the death threshold, or never start by the cutoff.
pub fn prepare_region(
    records: &[RawRecord],
    densities: Option<&[DensityRecord]>,
    opts: &PrepareOptions,
) -> Result<PreparedRegion> {
    let last_in_feed = records.iter().map(|r| r.date).max();
    let Some(cutoff) = opts.cutoff.or(last_in_feed) else {
        return Err(Error::NoUnitsSurvive);
    };

    // (unit, date) -> (cases, deaths); later rows win
    let mut cells: BTreeMap<&str, Days> = BTreeMap::new();
    let mut duplicates = 0;
    for r in records.iter().filter(|r| r.region == opts.region) {
        let prev = cells
            .entry(r.country_code.as_str())
            .or_default()
            .insert(r.date, (r.new_cases, r.new_deaths));
        if prev.is_some() {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!("{duplicates} duplicate (date, country) rows; last occurrence kept");
    }
    let measure_of = |c: &(Option<f64>, Option<f64>)| match opts.measure {
        Measure::Infection => c.0,
        Measure::Death => c.1,
    };
    let first_positive = |days: &Days| {
        days.iter()
            .find(|(d, c)| **d <= cutoff && measure_of(c).is_some_and(|v| v > 0.0))
            .map(|(d, _)| *d)
    };

    let Some(region_first) = cells.values().filter_map(first_positive).min() else {
        return Err(Error::NoUnitsSurvive);
    };
    let span_start = region_first + chrono::Days::new(opts.trim_days as u64);
    if span_start > cutoff {
        return Err(Error::NoUnitsSurvive);
    }
    let time_labels: Vec<NaiveDate> = span_start.iter_days().take_while(|d| *d <= cutoff).collect();
    let t_len = time_labels.len();

    let density: BTreeMap<&str, f64> = densities
        .unwrap_or_default()
        .iter()
        .map(|d| (d.country_code.as_str(), d.density))
        .collect();

    let mut out = PreparedRegion {
        region: opts.region,
        measure: opts.measure,
        series: Vec::new(),
        time_labels,
        final_counts: Vec::new(),
        duplicates,
        excluded_no_density: Vec::new(),
        excluded_deaths: Vec::new(),
        excluded_not_started: Vec::new(),
    };
    for (&code, days) in &cells {
        let dens = density.get(code).copied();
        if densities.is_some() && dens.is_none() {
            out.excluded_no_density.push(code.to_string());
            continue;
        }
        if opts.measure == Measure::Death {
            let total: f64 = days
                .range(..=cutoff)
                .filter_map(|(_, c)| c.1)
                .sum();
            if total < opts.death_threshold {
                out.excluded_deaths.push(code.to_string());
                continue;
            }
        }
        let Some(first) = first_positive(days) else {
            out.excluded_not_started.push(code.to_string());
            continue;
        };
        let start = (first - span_start).num_days().max(0) as usize;
        let counts: Vec<f64> = out
            .time_labels
            .iter()
            .map(|d| days.get(d).and_then(measure_of).unwrap_or(0.0))
            .collect();
        out.final_counts.push(counts[t_len - 1]);
        out.series.push(UnitSeries {
            unit_id: code.to_string(),
            start,
            counts,
            density: dens,
        });
    }
    for (what, list) in [
        ("without a density record", &out.excluded_no_density),
        ("below the death threshold", &out.excluded_deaths),
        ("not started by the cutoff", &out.excluded_not_started),
    ] {
        if !list.is_empty() {
            log::info!("excluded {} units {what}: {}", list.len(), list.join(" "));
        }
    }
    if out.series.is_empty() {
        return Err(Error::NoUnitsSurvive);
    }
    Ok(out)
}

/// Panel of already-transformed values stored in a canonical feed.
///
/// Each unit starts at its first non-blank value of `measure`; later blanks
/// count as zero. The span runs from the earliest to the latest date of the
/// region. Units are sorted by id.
pub fn panel_from_records(records: &[RawRecord], region: Region, measure: Measure) -> Result<Panel> {
    let rows: Vec<&RawRecord> = records.iter().filter(|r| r.region == region).collect();
    let (Some(first), Some(last)) = (
        rows.iter().map(|r| r.date).min(),
        rows.iter().map(|r| r.date).max(),
    ) else {
        return Err(Error::NoUnitsSurvive);
    };
    let labels: Vec<NaiveDate> = first.iter_days().take_while(|d| *d <= last).collect();
    let mut by_unit: BTreeMap<&str, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    for r in &rows {
        if let Some(v) = measure.of(r) {
            by_unit.entry(&r.country_code).or_default().insert(r.date, v);
        }
    }
    let ids: Vec<String> = by_unit.keys().map(|k| k.to_string()).collect();
    if ids.is_empty() {
        return Err(Error::NoUnitsSurvive);
    }
    let mut values = Array2::zeros((ids.len(), labels.len()));
    let mut starts = Vec::with_capacity(ids.len());
    for (i, days) in by_unit.values().enumerate() {
        let s = (*days.keys().next().expect("non-empty") - first).num_days() as usize;
        for (&d, &v) in days {
            values[[i, (d - first).num_days() as usize]] = v;
        }
        starts.push(s);
    }
    Panel::new(values, starts, ids, labels, region)
}

/// Writes records in the canonical schema; `None` counts become blank fields.
pub fn write_canonical<W: Write>(writer: W, records: &[RawRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "country_code", "region", "new_cases", "new_deaths"])?;
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in records {
        w.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            r.country_code.clone(),
            r.region.code().to_string(),
            fmt(r.new_cases),
            fmt(r.new_deaths),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Canonical rows for a panel of values: one row per unit and date, blank
/// before each unit's start. Values go in the `new_cases` column.
pub fn panel_records(panel: &Panel) -> Vec<RawRecord> {
    let mut out = Vec::with_capacity(panel.n_units() * panel.n_periods());
    for (t, &date) in panel.time_labels().iter().enumerate() {
        for i in 0..panel.n_units() {
            out.push(RawRecord {
                date,
                country_code: panel.unit_ids()[i].clone(),
                region: panel.region(),
                new_cases: panel.is_active(i, t).then(|| panel.values()[[i, t]]),
                new_deaths: None,
            });
        }
    }
    out
}
