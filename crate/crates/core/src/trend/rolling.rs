//! Rolling-window re-estimation of the trend exponent and the mean growth ratio.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;

use crate::bandwidth::{default_grid, select_bandwidth};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::panel::{eval_set, ser_period, EvalRule, Panel};
use crate::trend::{a_hat, lambda_curve, r_series};

pub const DEFAULT_WINDOW: usize = 30;
/// Evaluation rule inside each window: the last five periods.
pub const DEFAULT_WINDOW_RULE: EvalRule = EvalRule::Tail { len: 5 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowBandwidth {
    /// One kernel for every window.
    Fixed(KernelSpec),
    /// Cross-validate on the default grid inside each window.
    PerWindowCv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStatus {
    Ok,
    /// Some eigenvalue in the window was zero.
    Degenerate,
    /// Fewer than two units active in the window.
    TooFewUnits,
    /// Any other estimation failure.
    Failed,
}

impl WindowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowStatus::Ok => "ok",
            WindowStatus::Degenerate => "degenerate",
            WindowStatus::TooFewUnits => "too_few_units",
            WindowStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RollingRow {
    /// 0-based first and last period of the window in the parent panel.
    #[serde(serialize_with = "ser_period")]
    pub start: usize,
    #[serde(serialize_with = "ser_period")]
    pub end: usize,
    pub end_date: NaiveDate,
    pub a_hat: Option<f64>,
    pub r_bar: Option<f64>,
    pub h: Option<f64>,
    pub n_units: usize,
    pub status: WindowStatus,
}

/// One row per window of `window` consecutive periods, sliding by one.
///
/// Windows that cannot be estimated are kept with a non-`Ok` status.
pub fn rolling_windows(
    panel: &Panel,
    window: usize,
    policy: WindowBandwidth,
    c_rule: EvalRule,
) -> Result<Vec<RollingRow>> {
    let t_len = panel.n_periods();
    if window < 2 || window > t_len {
        return Err(Error::NotEnoughPeriods {
            window,
            available: t_len,
        });
    }
    let rows = (0..=t_len - window)
        .into_par_iter()
        .map(|first| one_window(panel, first, window, policy, c_rule))
        .collect();
    Ok(rows)
}

fn one_window(
    panel: &Panel,
    first: usize,
    window: usize,
    policy: WindowBandwidth,
    c_rule: EvalRule,
) -> RollingRow {
    let end = first + window - 1;
    let mut row = RollingRow {
        start: first,
        end,
        end_date: panel.time_labels()[end],
        a_hat: None,
        r_bar: None,
        h: None,
        n_units: 0,
        status: WindowStatus::TooFewUnits,
    };
    let Some(sub) = panel.window(first, window).filter(|p| p.n_units() >= 2) else {
        return row;
    };
    row.n_units = sub.n_units();

    let estimate = || -> Result<(f64, f64, Option<f64>)> {
        let c = eval_set(&sub, c_rule)?;
        let spec = match policy {
            WindowBandwidth::Fixed(spec) => spec,
            WindowBandwidth::PerWindowCv => {
                let cv = select_bandwidth(&sub, &default_grid(window), &c)?;
                KernelSpec::epanechnikov(cv.h_hat)?
            }
        };
        let curve = lambda_curve(&sub, &spec, &c)?;
        let a = a_hat(&curve, window)?;
        let r_bar = if curve.len() >= 2 {
            r_series(&curve)?.mean()
        } else {
            None
        };
        Ok((spec.h(), a, r_bar))
    };
    match estimate() {
        Ok((h, a, r_bar)) => {
            row.h = Some(h);
            row.a_hat = Some(a);
            row.r_bar = r_bar;
            row.status = WindowStatus::Ok;
        }
        Err(e) => {
            log::warn!("window ending {}: {e}", row.end_date);
            row.status = if is_degenerate(&e) {
                WindowStatus::Degenerate
            } else {
                WindowStatus::Failed
            };
        }
    }
    row
}

fn is_degenerate(e: &Error) -> bool {
    match e {
        Error::DegenerateSpectrum { .. } => true,
        Error::AtPeriod { source, .. } => is_degenerate(source),
        _ => false,
    }
}
