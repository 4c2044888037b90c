//! Trend estimators built on the leading eigenpair of `Sigma(u)`.
//!
//! * [`lambda_curve`]: top eigenpair at every period of the evaluation set.
//! * [`a_hat`]: trend exponent `ln(mean lambda) / (2 ln T)`.
//! * [`r_series`]: growth ratios `R_{t+1,t} = lambda_{t+1} / lambda_t`.
//! * [`q_ratios`]: loading ratios `Q_{u,i,ref} = l_{u,i} / l_{u,ref}`.
//!
//! Rolling-window re-estimation lives in [`rolling`], the single-peak
//! transform in [`peak`].

pub mod peak;
pub mod rolling;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::local_cov::sigma;
use crate::panel::{ser_period, ser_periods, EvaluationSet, Panel};
use crate::spectral::{top_eigenpair, EigenPair, PowerOptions};

pub use peak::{peak_transform, PeakEstimate};
pub use rolling::{
    rolling_windows, RollingRow, WindowBandwidth, WindowStatus, DEFAULT_WINDOW, DEFAULT_WINDOW_RULE,
};

/// Below this magnitude a reference loading is treated as zero.
pub const Q_REFERENCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaEntry {
    /// 0-based period.
    #[serde(serialize_with = "ser_period")]
    pub t: usize,
    pub u: f64,
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaCurve {
    pub entries: Vec<LambdaEntry>,
}

impl LambdaCurve {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lambdas(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.lambda)
    }

    pub fn get(&self, t: usize) -> Option<&LambdaEntry> {
        self.entries
            .binary_search_by_key(&t, |e| e.t)
            .ok()
            .map(|k| &self.entries[k])
    }
}

/// Top eigenpair of `Sigma(tau_t)` for every `t` in the evaluation set.
///
/// A zero eigenvalue is reported as [`Error::DegenerateSpectrum`].
pub fn lambda_curve(
    panel: &Panel,
    spec: &KernelSpec,
    c_set: &EvaluationSet,
) -> Result<LambdaCurve> {
    let entries = c_set
        .indices()
        .par_iter()
        .map(|&t| {
            let u = panel.tau(t);
            let cov = sigma(panel, spec, u).map_err(|e| e.at(t))?;
            let EigenPair {
                lambda,
                vector,
                iterations,
                residual,
            } = top_eigenpair(&cov.matrix, PowerOptions::default()).map_err(|e| e.at(t))?;
            if lambda <= 0.0 {
                return Err(Error::DegenerateSpectrum { period: Some(t) });
            }
            Ok(LambdaEntry {
                t,
                u,
                lambda,
                vector,
                iterations,
                residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LambdaCurve { entries })
}

/// `ln(mean lambda) / (2 ln T)` over the curve.
pub fn a_hat(curve: &LambdaCurve, n_periods: usize) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    if n_periods < 2 {
        return Err(Error::InvalidPanel(format!("need T >= 2, got {n_periods}")));
    }
    let mean = curve.lambdas().sum::<f64>() / curve.len() as f64;
    if mean.is_nan() || mean <= 0.0 {
        return Err(Error::DegenerateSpectrum { period: None });
    }
    Ok(mean.ln() / (2.0 * (n_periods as f64).ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioEntry {
    /// Earlier of the two periods (0-based).
    #[serde(serialize_with = "ser_period")]
    pub t: usize,
    /// `lambda_{t+1} / lambda_t`
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RSeries {
    pub entries: Vec<RatioEntry>,
    /// Periods `t` whose ratio is undefined because `lambda_t = 0`.
    #[serde(serialize_with = "ser_periods")]
    pub undefined: Vec<usize>,
}

impl RSeries {
    pub fn mean(&self) -> Option<f64> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.entries.iter().map(|e| e.r).sum::<f64>() / self.entries.len() as f64)
        }
    }
}

/// Ratios of adjacent eigenvalues for consecutive periods of the curve.
pub fn r_series(curve: &LambdaCurve) -> Result<RSeries> {
    if curve.len() < 2 {
        return Err(Error::InvalidPanel(
            "ratio series needs at least two evaluation periods".into(),
        ));
    }
    let mut out = RSeries::default();
    for pair in curve.entries.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.t != a.t + 1 {
            continue;
        }
        if a.lambda == 0.0 {
            log::warn!("R undefined at period {}: lambda is zero", a.t + 1);
            out.undefined.push(a.t);
            continue;
        }
        out.entries.push(RatioEntry {
            t: a.t,
            r: b.lambda / a.lambda,
        });
    }
    Ok(out)
}

/// `R_{ts} = lambda_t / lambda_s` for any two periods on the curve.
pub fn r_ratio(curve: &LambdaCurve, t: usize, s: usize) -> Option<f64> {
    let lt = curve.get(t)?.lambda;
    let ls = curve.get(s)?.lambda;
    (ls != 0.0).then(|| lt / ls)
}

/// `Q_{u,ij} = l_{u,i} / l_{u,j}`; `None` when `|l_{u,j}|` is below the floor.
pub fn q_pair(entry: &LambdaEntry, i: usize, j: usize) -> Option<f64> {
    if i == j {
        return Some(1.0);
    }
    let denom = entry.vector[j];
    (denom.abs() >= Q_REFERENCE_FLOOR).then(|| entry.vector[i] / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QColumn {
    #[serde(serialize_with = "ser_period")]
    pub t: usize,
    pub u: f64,
    /// `Q_{u,i,ref}` for every unit `i`; `None` when the reference loading vanishes.
    pub values: Option<Vec<f64>>,
}

/// Loading ratios against a reference unit at every period of the curve.
pub fn q_ratios(curve: &LambdaCurve, reference: usize) -> Result<Vec<QColumn>> {
    let n = curve.entries.first().map_or(0, |e| e.vector.len());
    if reference >= n {
        return Err(Error::InvalidPanel(format!(
            "reference unit {reference} out of range for {n} units"
        )));
    }
    Ok(curve
        .entries
        .iter()
        .map(|e| {
            let values = if e.vector[reference].abs() < Q_REFERENCE_FLOOR {
                log::warn!(
                    "Q undefined at period {}: reference loading vanishes",
                    e.t + 1
                );
                None
            } else {
                Some(
                    (0..n)
                        .map(|i| q_pair(e, i, reference).expect("reference loading checked"))
                        .collect(),
                )
            };
            QColumn {
                t: e.t,
                u: e.u,
                values,
            }
        })
        .collect())
}

/// Unit with the largest raw daily count on the final date; ties go to the
/// alphabetically first id.
pub fn select_reference(unit_ids: &[String], final_counts: &[f64]) -> Option<usize> {
    assert_eq!(unit_ids.len(), final_counts.len());
    (0..unit_ids.len()).reduce(|best, i| {
        let (a, b) = (final_counts[i], final_counts[best]);
        if a > b || (a == b && unit_ids[i] < unit_ids[best]) {
            i
        } else {
            best
        }
    })
}
