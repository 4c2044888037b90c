//! End-to-end estimation on a prepared panel.

use chrono::NaiveDate;
use serde::Serialize;

use crate::bandwidth::{default_grid, select_bandwidth, CvResult};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::panel::{eval_set, EvalRule, Panel, Region};
use crate::synthetic::Model;
use crate::trend::{
    a_hat, lambda_curve, peak_transform, q_ratios, r_series, LambdaCurve, PeakEstimate, QColumn,
    RSeries,
};

#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthChoice {
    /// Cross-validate; `None` uses the default grid.
    Auto(Option<Vec<f64>>),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub model: Model,
    pub bandwidth: BandwidthChoice,
    pub c_rule: EvalRule,
    /// Reference unit for the loading ratios; defaults to the unit with the
    /// largest value in the final period.
    pub reference: Option<usize>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            model: Model::Model1,
            bandwidth: BandwidthChoice::Auto(None),
            c_rule: EvalRule::QuarterTrim,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthEstimate {
    /// `h_hat`, `h_l`, `h_r` or `fixed`.
    pub label: &'static str,
    pub h: f64,
    pub a_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationReport {
    pub model: Model,
    pub region: Region,
    pub n_units: usize,
    pub n_periods: usize,
    pub unit_ids: Vec<String>,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub c_rule: EvalRule,
    /// 1-based periods of the evaluation set.
    pub c_set: Vec<usize>,
    pub h_used: f64,
    pub a_hat: f64,
    pub bandwidths: Vec<BandwidthEstimate>,
    pub cv: Option<CvResult>,
    pub lambda_curve: LambdaCurve,
    pub r_series: RSeries,
    pub reference: String,
    pub q_series: Vec<QColumn>,
    pub peak: Option<PeakEstimate>,
}

fn default_reference(panel: &Panel) -> usize {
    let last = panel.n_periods() - 1;
    let finals: Vec<f64> = (0..panel.n_units()).map(|i| panel.values()[[i, last]]).collect();
    crate::trend::select_reference(panel.unit_ids(), &finals).expect("panel has units")
}

/// Bandwidth selection, trend exponent at `h_hat`, `h_l`, `h_r`, and the
/// ratio series at `h_hat`.
///
/// Under Model 2 the bandwidth is chosen on the observed panel, the same
/// bandwidth smooths out the per-unit peaks, and the estimators then run on
/// the transformed panel.
pub fn estimate(panel: &Panel, opts: &EstimateOptions) -> Result<EstimationReport> {
    let c = eval_set(panel, opts.c_rule)?;
    let reference = opts.reference.unwrap_or_else(|| default_reference(panel));
    if reference >= panel.n_units() {
        return Err(Error::InvalidPanel(format!("reference unit {reference} out of range")));
    }

    let (h_used, cv) = match &opts.bandwidth {
        BandwidthChoice::Fixed(h) => (*h, None),
        BandwidthChoice::Auto(grid) => {
            let grid = grid.clone().unwrap_or_else(|| default_grid(panel.n_periods()));
            let cv = select_bandwidth(panel, &grid, &c)?;
            (cv.h_hat, Some(cv))
        }
    };
    let spec = KernelSpec::epanechnikov(h_used)?;

    let (work, peak) = match opts.model {
        Model::Model1 => (panel.clone(), None),
        Model::Model2 => {
            let (star, est) = peak_transform(panel, &spec)?;
            (star, Some(est))
        }
    };

    let curve = lambda_curve(&work, &spec, &c)?;
    let a = a_hat(&curve, work.n_periods())?;
    let mut bandwidths = vec![BandwidthEstimate {
        label: if cv.is_some() { "h_hat" } else { "fixed" },
        h: h_used,
        a_hat: a,
    }];
    if let Some(cv) = &cv {
        for (label, h) in [("h_l", cv.h_l), ("h_r", cv.h_r)] {
            let s = spec.with_h(h)?;
            let a = a_hat(&lambda_curve(&work, &s, &c)?, work.n_periods())?;
            bandwidths.push(BandwidthEstimate { label, h, a_hat: a });
        }
    }
    let r = if curve.len() >= 2 {
        r_series(&curve)?
    } else {
        RSeries::default()
    };
    let q = q_ratios(&curve, reference)?;

    Ok(EstimationReport {
        model: opts.model,
        region: panel.region(),
        n_units: panel.n_units(),
        n_periods: panel.n_periods(),
        unit_ids: panel.unit_ids().to_vec(),
        first_date: panel.time_labels()[0],
        last_date: panel.time_labels()[panel.n_periods() - 1],
        c_rule: opts.c_rule,
        c_set: c.periods(),
        h_used,
        a_hat: a,
        bandwidths,
        cv,
        lambda_curve: curve,
        r_series: r,
        reference: panel.unit_ids()[reference].clone(),
        q_series: q,
        peak,
    })
}
