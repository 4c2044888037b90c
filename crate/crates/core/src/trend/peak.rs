//! Single-peak transform: `y*_it = gamma_i - y_it`, where `gamma_i` is the
//! maximum of a local-constant smooth of unit `i` over its active periods.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{local_constant_smooth, KernelSpec};
use crate::panel::{ser_periods, Panel};

/// Fewest active observations a unit needs before its peak is estimated.
pub const MIN_ACTIVE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakEstimate {
    pub gamma_hat: Vec<f64>,
    /// 0-based period at which each smooth attains its maximum (first if tied).
    #[serde(serialize_with = "ser_periods")]
    pub argmax_t: Vec<usize>,
}

/// Returns the transformed panel and the per-unit peak estimates.
pub fn peak_transform(panel: &Panel, spec: &KernelSpec) -> Result<(Panel, PeakEstimate)> {
    let (n, t_len) = panel.values().dim();
    let mut values = panel.values().clone();
    let mut gamma_hat = Vec::with_capacity(n);
    let mut argmax_t = Vec::with_capacity(n);

    for i in 0..n {
        let start = panel.starts()[i];
        let unit = || panel.unit_ids()[i].clone();
        if t_len - start < MIN_ACTIVE {
            return Err(Error::InvalidPanel(format!(
                "unit `{}` has {} active periods, peak transform needs {MIN_ACTIVE}",
                unit(),
                t_len - start
            )));
        }
        let row = panel.values().row(i).to_vec();
        let grid: Vec<usize> = (start..t_len).collect();
        let smooth = local_constant_smooth(&row, start, spec, &grid).map_err(|e| Error::ForUnit {
            unit: unit(),
            source: Box::new(e),
        })?;
        let (best, gamma) = smooth
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
        for t in start..t_len {
            values[[i, t]] = gamma - row[t];
        }
        gamma_hat.push(gamma);
        argmax_t.push(start + best);
    }

    Ok((
        panel.with_values(values)?,
        PeakEstimate {
            gamma_hat,
            argmax_t,
        },
    ))
}
