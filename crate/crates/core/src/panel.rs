//! Panel data model for unbalanced count panels.
//!
//! A [`Panel`] holds an `N x T` matrix of transformed counts. Unit `i` enters
//! the sample at period `starts[i]`; every earlier entry is stored as a literal
//! zero, so the local second-moment matrices need no masking.
//!
//! Periods are 0-based in the API. The normalized time of period `t` is
//! `tau_t = (t + 1) / T`, so the last period sits at `tau = 1`. Files and
//! reports emit 1-based period numbers.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geographic grouping of units. Asia and Oceania share one group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "AF")]
    Africa,
    #[serde(rename = "AM")]
    America,
    #[serde(rename = "AO")]
    AsiaOceania,
    #[serde(rename = "EU")]
    Europe,
    #[serde(rename = "custom")]
    Custom,
}

impl Region {
    pub const ALL: [Region; 4] = [
        Region::Africa,
        Region::America,
        Region::AsiaOceania,
        Region::Europe,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Region::Africa => "AF",
            Region::America => "AM",
            Region::AsiaOceania => "AO",
            Region::Europe => "EU",
            Region::Custom => "custom",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "AF" => Ok(Region::Africa),
            "AM" => Ok(Region::America),
            "AO" => Ok(Region::AsiaOceania),
            "EU" => Ok(Region::Europe),
            "custom" => Ok(Region::Custom),
            other => Err(format!("unknown region `{other}`")),
        }
    }
}

/// Log transform applied to daily counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    /// `ln(count + 1)`
    #[serde(rename = "case1")]
    Case1,
    /// `ln((count + 1) / density)`
    #[serde(rename = "case2")]
    Case2,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Case1 => "case1",
            Transform::Case2 => "case2",
        })
    }
}

/// Raw daily counts for one unit over the common calendar span.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSeries {
    pub unit_id: String,
    /// First recorded period (0-based).
    pub start: usize,
    /// One count per period of the span; entries before `start` are ignored.
    pub counts: Vec<f64>,
    /// People per square kilometre.
    pub density: Option<f64>,
}

/// Normalized time grid `tau_t = t / T`, `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    tau: Vec<f64>,
}

impl TimeGrid {
    pub fn new(n_periods: usize) -> Self {
        let len = n_periods as f64;
        TimeGrid {
            tau: (1..=n_periods).map(|t| t as f64 / len).collect(),
        }
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

/// Normalized time of 0-based period `t` in a sample of `n_periods`.
#[inline]
pub fn tau(t: usize, n_periods: usize) -> f64 {
    (t + 1) as f64 / n_periods as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    values: Array2<f64>,
    starts: Vec<usize>,
    unit_ids: Vec<String>,
    time_labels: Vec<NaiveDate>,
    region: Region,
}

impl Panel {
    /// Validates and wraps a value matrix.
    ///
    /// Panels built directly may have a single unit; `build_panel` requires two.
    pub fn new(
        values: Array2<f64>,
        starts: Vec<usize>,
        unit_ids: Vec<String>,
        time_labels: Vec<NaiveDate>,
        region: Region,
    ) -> Result<Panel> {
        let (n, t) = values.dim();
        if n == 0 {
            return Err(Error::InvalidPanel("no units".into()));
        }
        if t < 2 {
            return Err(Error::InvalidPanel(format!("need T >= 2, got {t}")));
        }
        if starts.len() != n || unit_ids.len() != n {
            return Err(Error::InvalidPanel(format!(
                "{n} rows but {} starts and {} unit ids",
                starts.len(),
                unit_ids.len()
            )));
        }
        if time_labels.len() != t {
            return Err(Error::InvalidPanel(format!(
                "{t} periods but {} time labels",
                time_labels.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &unit_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidPanel(format!("duplicate unit id `{id}`")));
            }
        }
        for (i, &s) in starts.iter().enumerate() {
            if s >= t {
                return Err(Error::InvalidPanel(format!(
                    "unit `{}` starts at period {} beyond T = {t}",
                    unit_ids[i],
                    s + 1
                )));
            }
            let row = values.row(i);
            if let Some(k) = row.iter().take(s).position(|&v| v != 0.0) {
                return Err(Error::InvalidPanel(format!(
                    "unit `{}` has a nonzero value at period {} before its start",
                    unit_ids[i],
                    k + 1
                )));
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidPanel(format!(
                    "unit `{}` has a non-finite value at period {}",
                    unit_ids[i],
                    k + 1
                )));
            }
        }
        Ok(Panel {
            values,
            starts,
            unit_ids,
            time_labels,
            region,
        })
    }

    pub fn n_units(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn time_labels(&self) -> &[NaiveDate] {
        &self.time_labels
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn tau(&self, t: usize) -> f64 {
        tau(t, self.n_periods())
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(self.n_periods())
    }

    /// Cross-section `Y_t`.
    pub fn column(&self, t: usize) -> ArrayView1<'_, f64> {
        self.values.column(t)
    }

    pub fn is_active(&self, unit: usize, t: usize) -> bool {
        t >= self.starts[unit]
    }

    /// Number of units active at period `t`.
    pub fn active_count(&self, t: usize) -> usize {
        self.starts.iter().filter(|&&s| s <= t).count()
    }

    /// Sub-panel over periods `first..first + len`, re-indexed from zero.
    ///
    /// Units that have not started by the last period of the span are dropped.
    /// Returns `None` when no unit is active in the span.
    pub fn window(&self, first: usize, len: usize) -> Option<Panel> {
        let last = first + len - 1;
        assert!(last < self.n_periods(), "window exceeds panel");
        let keep: Vec<usize> = (0..self.n_units())
            .filter(|&i| self.starts[i] <= last)
            .collect();
        if keep.is_empty() {
            return None;
        }
        let mut values = Array2::zeros((keep.len(), len));
        let mut starts = Vec::with_capacity(keep.len());
        let mut ids = Vec::with_capacity(keep.len());
        for (row, &i) in keep.iter().enumerate() {
            for k in 0..len {
                values[[row, k]] = self.values[[i, first + k]];
            }
            starts.push(self.starts[i].saturating_sub(first));
            ids.push(self.unit_ids[i].clone());
        }
        Some(Panel {
            values,
            starts,
            unit_ids: ids,
            time_labels: self.time_labels[first..=last].to_vec(),
            region: self.region,
        })
    }

    /// Same layout with a new value matrix; zero-fill is re-checked.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Panel> {
        Panel::new(
            values,
            self.starts.clone(),
            self.unit_ids.clone(),
            self.time_labels.clone(),
            self.region,
        )
    }
}

/// Serializes a 0-based period as its 1-based number.
pub(crate) fn ser_period<S: serde::Serializer>(t: &usize, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(*t as u64 + 1)
}

pub(crate) fn ser_periods<S: serde::Serializer>(
    ts: &[usize],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(ts.iter().map(|t| t + 1))
}

/// Builds a panel from raw daily counts.
///
/// Negative counts are clamped to zero before the transform. Entries before a
/// unit's start are zero.
pub fn build_panel(
    series: &[UnitSeries],
    time_labels: &[NaiveDate],
    region: Region,
    transform: Transform,
) -> Result<Panel> {
    let n = series.len();
    let t_len = time_labels.len();
    if n < 2 {
        return Err(Error::InvalidPanel(format!("need N >= 2 units, got {n}")));
    }
    let mut values = Array2::zeros((n, t_len));
    let mut starts = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for (i, unit) in series.iter().enumerate() {
        if unit.counts.len() != t_len {
            return Err(Error::InvalidPanel(format!(
                "unit `{}` has {} counts for {t_len} periods",
                unit.unit_id,
                unit.counts.len()
            )));
        }
        let log_density = match transform {
            Transform::Case1 => 0.0,
            Transform::Case2 => match unit.density {
                Some(d) if d > 0.0 && d.is_finite() => d.ln(),
                _ => {
                    return Err(Error::MissingDensity {
                        unit: unit.unit_id.clone(),
                    })
                }
            },
        };
        for t in unit.start..t_len {
            let count = unit.counts[t];
            if !count.is_finite() {
                return Err(Error::NonFiniteCount {
                    unit: unit.unit_id.clone(),
                    period: t + 1,
                });
            }
            values[[i, t]] = count.max(0.0).ln_1p() - log_density;
        }
        starts.push(unit.start);
        ids.push(unit.unit_id.clone());
    }
    Panel::new(values, starts, ids, time_labels.to_vec(), region)
}

/// Multiplies every active entry by `c > 0`.
pub fn rescale(panel: &Panel, c: f64) -> Result<Panel> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::NonPositiveScale(c));
    }
    let mut out = panel.clone();
    out.values.mapv_inplace(|v| v * c);
    Ok(out)
}

/// How the evaluation set is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalRule {
    /// `{floor(T/4) + 1, ..., T}`
    QuarterTrim,
    /// Periods where at least `N - ln N` units are active.
    LogNCount,
    /// `{max_i start_i - margin, ..., T}`, clipped to the sample.
    Explicit { margin: usize },
    /// The last `len` periods.
    Tail { len: usize },
}

impl FromStr for EvalRule {
    type Err = String;

    /// Parses `quarter`, `logn`, `explicit:K` or `tail:K`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parse_k = |k: &str| {
            k.parse::<usize>()
                .map_err(|_| format!("bad integer `{k}` in evaluation rule"))
        };
        match s {
            "quarter" => Ok(EvalRule::QuarterTrim),
            "logn" => Ok(EvalRule::LogNCount),
            _ => match s.split_once(':') {
                Some(("explicit", k)) => Ok(EvalRule::Explicit { margin: parse_k(k)? }),
                Some(("tail", k)) => Ok(EvalRule::Tail { len: parse_k(k)? }),
                _ => Err(format!("unknown evaluation rule `{s}`")),
            },
        }
    }
}

/// Ordered subset of periods on which estimates are averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSet {
    indices: Vec<usize>,
    rule: EvalRule,
}

impl EvaluationSet {
    /// Explicit index list; must be non-empty, ascending and inside `0..n_periods`.
    pub fn from_indices(indices: Vec<usize>, n_periods: usize) -> Result<EvaluationSet> {
        if indices.is_empty() {
            return Err(Error::EmptyEvaluationSet);
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) || indices[indices.len() - 1] >= n_periods {
            return Err(Error::InvalidPanel(
                "evaluation indices must be strictly ascending and inside the sample".into(),
            ));
        }
        Ok(EvaluationSet {
            indices,
            rule: EvalRule::Explicit { margin: 0 },
        })
    }

    /// 0-based periods.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// 1-based period numbers.
    pub fn periods(&self) -> Vec<usize> {
        self.indices.iter().map(|t| t + 1).collect()
    }

    pub fn rule(&self) -> EvalRule {
        self.rule
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Builds the evaluation set for `panel` under `rule`.
pub fn eval_set(panel: &Panel, rule: EvalRule) -> Result<EvaluationSet> {
    let t_len = panel.n_periods();
    let indices: Vec<usize> = match rule {
        EvalRule::QuarterTrim => (t_len / 4..t_len).collect(),
        EvalRule::LogNCount => {
            let n = panel.n_units() as f64;
            let threshold = n - n.ln();
            (0..t_len)
                .filter(|&t| panel.active_count(t) as f64 >= threshold)
                .collect()
        }
        EvalRule::Explicit { margin } => {
            let latest = panel.starts().iter().copied().max().unwrap_or(0);
            (latest.saturating_sub(margin)..t_len).collect()
        }
        EvalRule::Tail { len } => (t_len.saturating_sub(len)..t_len).collect(),
    };
    if indices.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    Ok(EvaluationSet { indices, rule })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        (0..n).map(|k| d0 + chrono::Days::new(k as u64)).collect()
    }

    fn unit(id: &str, start: usize, counts: Vec<f64>, density: Option<f64>) -> UnitSeries {
        UnitSeries {
            unit_id: id.into(),
            start,
            counts,
            density,
        }
    }

    fn flat_panel(n: usize, t_len: usize, starts: Vec<usize>) -> Panel {
        let mut values = Array2::zeros((n, t_len));
        for i in 0..n {
            for t in starts[i]..t_len {
                values[[i, t]] = 1.0 + i as f64;
            }
        }
        let ids = (0..n).map(|i| format!("U{i:03}")).collect();
        Panel::new(values, starts, ids, dates(t_len), Region::Custom).unwrap()
    }

    #[test]
    fn case1_and_case2_transforms() {
        let series = vec![
            unit("AAA", 0, vec![0.0, 19.0], Some(2.0)),
            unit("BBB", 1, vec![5.0, 19.0], Some(2.0)),
        ];
        let p1 = build_panel(&series, &dates(2), Region::Europe, Transform::Case1).unwrap();
        assert_eq!(p1.values()[[0, 0]], 0.0);
        assert!((p1.values()[[0, 1]] - 20f64.ln()).abs() < 1e-15);
        assert!((p1.values()[[0, 1]] - 2.9957).abs() < 1e-4);
        // pre-start entry ignored
        assert_eq!(p1.values()[[1, 0]], 0.0);
        let p2 = build_panel(&series, &dates(2), Region::Europe, Transform::Case2).unwrap();
        assert!((p2.values()[[1, 1]] - 10f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn case2_requires_density() {
        let series = vec![
            unit("AAA", 0, vec![1.0, 2.0], Some(3.0)),
            unit("BBB", 0, vec![1.0, 2.0], None),
        ];
        let err = build_panel(&series, &dates(2), Region::Europe, Transform::Case2).unwrap_err();
        assert!(matches!(err, Error::MissingDensity { ref unit } if unit == "BBB"));
        assert!(build_panel(&series, &dates(2), Region::Europe, Transform::Case1).is_ok());
    }

    #[test]
    fn negative_counts_clamped_and_nan_rejected() {
        let series = vec![
            unit("AAA", 0, vec![-4.0, 3.0], None),
            unit("BBB", 0, vec![1.0, f64::NAN], None),
        ];
        let err = build_panel(&series, &dates(2), Region::Africa, Transform::Case1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteCount { period: 2, .. }));
        let series = vec![
            unit("AAA", 0, vec![-4.0, 3.0], None),
            unit("BBB", 0, vec![1.0, 1.0], None),
        ];
        let p = build_panel(&series, &dates(2), Region::Africa, Transform::Case1).unwrap();
        assert_eq!(p.values()[[0, 0]], 0.0);
    }

    #[test]
    fn panel_rejects_bad_layouts() {
        let values = Array2::from_shape_vec((2, 3), vec![1.0, 1.0, 1.0, 2.0, 1.0, 1.0]).unwrap();
        let ids = vec!["A".to_string(), "B".to_string()];
        // nonzero before start
        assert!(Panel::new(values.clone(), vec![0, 1], ids.clone(), dates(3), Region::Custom).is_err());
        // start beyond T
        assert!(Panel::new(values.clone(), vec![0, 3], ids.clone(), dates(3), Region::Custom).is_err());
        // duplicate ids
        let dup = vec!["A".to_string(), "A".to_string()];
        assert!(Panel::new(values.clone(), vec![0, 0], dup, dates(3), Region::Custom).is_err());
        assert!(Panel::new(values, vec![0, 0], ids, dates(3), Region::Custom).is_ok());
    }

    #[test]
    fn quarter_trim_on_98_periods() {
        let p = flat_panel(2, 98, vec![0, 0]);
        let c = eval_set(&p, EvalRule::QuarterTrim).unwrap();
        assert_eq!(c.len(), 74);
        assert_eq!(c.periods()[0], 25);
        assert_eq!(*c.periods().last().unwrap(), 98);
    }

    #[test]
    fn explicit_rule_clips_at_first_period() {
        let p = flat_panel(3, 30, vec![0, 0, 0]);
        let c = eval_set(&p, EvalRule::Explicit { margin: 4 }).unwrap();
        assert_eq!(c.periods(), (1..=30).collect::<Vec<_>>());
        let p = flat_panel(3, 30, vec![0, 4, 9]);
        let c = eval_set(&p, EvalRule::Explicit { margin: 4 }).unwrap();
        assert_eq!(c.periods()[0], 6);
    }

    #[test]
    fn log_n_count_matches_brute_force() {
        // 44 units start at period 1 and 4 at period 10; 48 - ln 48 = 44.13
        let mut starts = vec![0usize; 44];
        starts.extend([9, 9, 9, 9]);
        let p = flat_panel(48, 62, starts.clone());
        let c = eval_set(&p, EvalRule::LogNCount).unwrap();
        let threshold = 48.0 - 48f64.ln();
        let brute: Vec<usize> = (1..=62)
            .filter(|&t| starts.iter().filter(|&&s| s < t).count() as f64 >= threshold)
            .collect();
        assert_eq!(c.periods(), brute);
        assert_eq!(c.periods(), (10..=62).collect::<Vec<_>>());
    }

    #[test]
    fn tail_rule() {
        let p = flat_panel(2, 30, vec![0, 0]);
        let c = eval_set(&p, EvalRule::Tail { len: 5 }).unwrap();
        assert_eq!(c.periods(), vec![26, 27, 28, 29, 30]);
    }

    #[test]
    fn eval_rule_parsing() {
        assert_eq!("quarter".parse::<EvalRule>().unwrap(), EvalRule::QuarterTrim);
        assert_eq!("logn".parse::<EvalRule>().unwrap(), EvalRule::LogNCount);
        assert_eq!(
            "explicit:3".parse::<EvalRule>().unwrap(),
            EvalRule::Explicit { margin: 3 }
        );
        assert!("explicit:x".parse::<EvalRule>().is_err());
        assert!("median".parse::<EvalRule>().is_err());
    }

    #[test]
    fn rescale_rules() {
        let p = flat_panel(2, 4, vec![0, 2]);
        assert_eq!(rescale(&p, 1.0).unwrap(), p);
        let doubled = rescale(&p, 2.0).unwrap();
        assert_eq!(doubled.values()[[1, 3]], 4.0);
        assert_eq!(doubled.values()[[1, 0]], 0.0);
        assert_eq!(doubled.starts(), p.starts());
        assert!(matches!(rescale(&p, 0.0), Err(Error::NonPositiveScale(_))));
        assert!(rescale(&p, -1.0).is_err());
    }

    #[test]
    fn window_reindexes_and_drops_late_units() {
        let p = flat_panel(3, 20, vec![0, 5, 15]);
        let w = p.window(2, 10).unwrap();
        assert_eq!(w.n_units(), 2);
        assert_eq!(w.starts(), &[0, 3]);
        assert_eq!(w.time_labels()[0], p.time_labels()[2]);
    }

    #[test]
    fn time_grid_ends_at_one() {
        let g = TimeGrid::new(7);
        assert_eq!(*g.tau().last().unwrap(), 1.0);
        assert!(g.tau().windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn quarter_trim_size(t_len in 4usize..400) {
            let p = flat_panel(2, t_len, vec![0, 0]);
            let c = eval_set(&p, EvalRule::QuarterTrim).unwrap();
            prop_assert_eq!(c.len(), t_len - t_len / 4);
        }

        #[test]
        fn build_panel_zero_fill_and_determinism(
            counts in proptest::collection::vec(proptest::collection::vec(-5.0f64..1e5, 12), 2..6),
            starts in proptest::collection::vec(0usize..12, 6),
        ) {
            let series: Vec<UnitSeries> = counts
                .iter()
                .enumerate()
                .map(|(i, c)| unit(&format!("U{i}"), starts[i], c.clone(), Some(1.5)))
                .collect();
            let a = build_panel(&series, &dates(12), Region::Custom, Transform::Case2).unwrap();
            let b = build_panel(&series, &dates(12), Region::Custom, Transform::Case2).unwrap();
            for i in 0..a.n_units() {
                for t in 0..a.starts()[i] {
                    prop_assert_eq!(a.values()[[i, t]], 0.0);
                }
            }
            prop_assert!(a.values().iter().zip(b.values().iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
