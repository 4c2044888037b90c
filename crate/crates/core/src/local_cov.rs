//! Kernel-weighted local second-moment matrix
//!
//! ```text
//! Sigma(u) = 1/(N T) * sum_t Y_t Y_t' K_h(tau_t - u)
//! ```
//!
//! and its leave-one-out variant used by bandwidth cross-validation. Terms are
//! accumulated in ascending `t` so results are bitwise reproducible.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kernel::{weights_at, KernelSpec};
use crate::panel::Panel;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalCovariance {
    pub u: f64,
    /// Symmetric `N x N`.
    pub matrix: Array2<f64>,
    /// Total kernel mass of the periods that entered the sum.
    pub effective_weight: f64,
}

/// `Sigma(u)` for `u` in `(0, 1]`.
pub fn sigma(panel: &Panel, spec: &KernelSpec, u: f64) -> Result<LocalCovariance> {
    accumulate(panel, spec, u, None)
}

/// `Sigma(tau_{t_out})` with the `t_out` term removed. The divisor stays `N T`.
pub fn sigma_loo(panel: &Panel, spec: &KernelSpec, t_out: usize) -> Result<LocalCovariance> {
    if t_out >= panel.n_periods() {
        return Err(Error::InvalidPanel(format!(
            "left-out period {} outside 1..={}",
            t_out + 1,
            panel.n_periods()
        )));
    }
    accumulate(panel, spec, panel.tau(t_out), Some(t_out))
}

fn accumulate(
    panel: &Panel,
    spec: &KernelSpec,
    u: f64,
    skip: Option<usize>,
) -> Result<LocalCovariance> {
    let n = panel.n_units();
    let t_len = panel.n_periods();
    let weights = weights_at(spec, t_len, u);
    let values = panel.values();

    let mut upper = vec![0.0; n * n];
    let mut mass = 0.0;
    let mut y = vec![0.0; n];
    for (t, &w) in weights.iter().enumerate() {
        if w == 0.0 || Some(t) == skip {
            continue;
        }
        mass += w;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = values[[i, t]];
        }
        for i in 0..n {
            let wyi = w * y[i];
            if wyi == 0.0 {
                continue;
            }
            let row = &mut upper[i * n..(i + 1) * n];
            for j in i..n {
                row[j] += wyi * y[j];
            }
        }
    }
    if mass == 0.0 {
        return Err(Error::EmptyWindow { u });
    }

    let scale = 1.0 / (n as f64 * t_len as f64);
    let mut matrix = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = upper[i * n + j] * scale;
            matrix[[i, j]] = v;
            matrix[[j, i]] = v;
        }
    }
    Ok(LocalCovariance {
        u,
        matrix,
        effective_weight: mass,
    })
}
