//! Epanechnikov kernel with right-boundary renormalization, and a
//! local-constant (Nadaraya-Watson) time smoother.
//!
//! For an evaluation point `u` in `(1 - h, 1]` the kernel is divided by its
//! mass inside the sample, `int_{-1}^{(1-u)/h} K(w) dw`, so the weights still
//! integrate to one. The left boundary is never adjusted: evaluation sets
//! exclude the early periods.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::tau;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Epanechnikov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    RightAdjusted,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    h: f64,
    boundary: Boundary,
}

impl KernelSpec {
    /// Bandwidths are accepted on `(0, 1]`.
    pub fn new(family: KernelFamily, h: f64, boundary: Boundary) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::InvalidBandwidth(h));
        }
        Ok(KernelSpec {
            family,
            h,
            boundary,
        })
    }

    /// Right-adjusted Epanechnikov kernel, the estimator default.
    pub fn epanechnikov(h: f64) -> Result<Self> {
        Self::new(KernelFamily::Epanechnikov, h, Boundary::RightAdjusted)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Same kernel at another bandwidth.
    pub fn with_h(&self, h: f64) -> Result<Self> {
        Self::new(self.family, h, self.boundary)
    }

    /// Mass of the unscaled kernel on `[-1, (1-u)/h]` when `u` is in the
    /// right boundary zone, otherwise 1.
    fn boundary_mass(&self, u: f64) -> f64 {
        match self.boundary {
            Boundary::RightAdjusted if u > 1.0 - self.h => {
                epanechnikov_cdf((1.0 - u) / self.h)
            }
            _ => 1.0,
        }
    }
}

/// `0.75 (1 - w^2)` on `|w| <= 1`.
#[inline]
pub fn epanechnikov(w: f64) -> f64 {
    if w.abs() <= 1.0 {
        0.75 * (1.0 - w * w)
    } else {
        0.0
    }
}

/// `int_{-1}^{x} K(w) dw` in closed form.
#[inline]
pub fn epanechnikov_cdf(x: f64) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    0.75 * (x - x * x * x / 3.0) + 0.5
}

/// Scaled, boundary-adjusted weight `K((tau - u)/h) / h` of an observation at
/// time `tau` for evaluation point `u`.
pub fn kernel_weight(spec: &KernelSpec, tau: f64, u: f64) -> f64 {
    let k = match spec.family {
        KernelFamily::Epanechnikov => epanechnikov((tau - u) / spec.h),
    };
    if k == 0.0 {
        return 0.0;
    }
    k / spec.boundary_mass(u) / spec.h
}

/// Kernel weights of every period `0..n_periods` at evaluation point `u`.
pub(crate) fn weights_at(spec: &KernelSpec, n_periods: usize, u: f64) -> Vec<f64> {
    (0..n_periods)
        .map(|t| kernel_weight(spec, tau(t, n_periods), u))
        .collect()
}

/// Nadaraya-Watson local-constant estimate of `series` at each grid period.
///
/// Only periods `t >= active_from` enter the weighted mean. Grid entries are
/// 0-based periods and must not precede `active_from`.
pub fn local_constant_smooth(
    series: &[f64],
    active_from: usize,
    spec: &KernelSpec,
    grid: &[usize],
) -> Result<Vec<f64>> {
    let t_len = series.len();
    grid.iter()
        .map(|&g| {
            if g < active_from || g >= t_len {
                return Err(Error::InvalidPanel(format!(
                    "smoothing grid period {} outside active range {}..={t_len}",
                    g + 1,
                    active_from + 1
                )));
            }
            let u = tau(g, t_len);
            let (mut num, mut den) = (0.0, 0.0);
            for (t, &x) in series.iter().enumerate().skip(active_from) {
                let w = kernel_weight(spec, tau(t, t_len), u);
                num += w * x;
                den += w;
            }
            if den > 0.0 {
                Ok(num / den)
            } else {
                Err(Error::BandwidthTooSmall { period: g + 1 })
            }
        })
        .collect()
}
