//! Leave-one-out cross-validated bandwidth.
//!
//! ```text
//! CV(h) = sum_{t in C} || Y_t / (sqrt(N) T^{a_h}) - l_{-t} ||^2
//! ```
//!
//! `a_h` is the trend exponent at bandwidth `h` and `l_{-t}` the leading
//! eigenvector of `Sigma(tau_t)` with period `t` left out, sign-aligned with
//! `Y_t` before the residual is taken.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::local_cov::sigma_loo;
use crate::panel::{EvaluationSet, Panel};
use crate::spectral::{top_eigenpair, PowerOptions};
use crate::trend::{a_hat, lambda_curve};

pub const GRID_SIZE: usize = 20;
pub const GRID_UPPER: f64 = 0.5;
/// Ratios of the sensitivity bandwidths to `h_hat`.
pub const H_LOW_FACTOR: f64 = 0.8;
pub const H_HIGH_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub h_hat: f64,
    pub h_grid: Vec<f64>,
    /// `+inf` for infeasible candidates.
    #[serde(serialize_with = "ser_scores")]
    pub cv_values: Vec<f64>,
    pub h_l: f64,
    pub h_r: f64,
    /// `a_h` at each candidate; `None` where it could not be computed.
    pub a_per_h: Vec<Option<f64>>,
}

fn ser_scores<S: serde::Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        match x.is_finite() {
            true => seq.serialize_element(&Some(*x))?,
            false => seq.serialize_element(&None::<f64>)?,
        }
    }
    seq.end()
}

/// `GRID_SIZE` equally spaced bandwidths on `[max(4/T, 0.05), 0.5]`.
pub fn default_grid(n_periods: usize) -> Vec<f64> {
    let lower = (4.0 / n_periods as f64).clamp(0.05, GRID_UPPER);
    let step = (GRID_UPPER - lower) / (GRID_SIZE - 1) as f64;
    (0..GRID_SIZE).map(|k| lower + step * k as f64).collect()
}

/// CV score and `a_h` at one bandwidth. Infeasible candidates score `+inf`.
fn evaluate(panel: &Panel, h: f64, c_set: &EvaluationSet) -> Result<(f64, Option<f64>)> {
    let spec = KernelSpec::epanechnikov(h)?;
    if c_set.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let infeasible = |e: Error| {
        log::warn!("bandwidth {h}: {e}; candidate excluded");
        Ok((f64::INFINITY, None))
    };

    let a = match lambda_curve(panel, &spec, c_set).and_then(|c| a_hat(&c, panel.n_periods())) {
        Ok(a) => a,
        Err(e) => return infeasible(e),
    };
    let n = panel.n_units();
    let scale = 1.0 / ((n as f64).sqrt() * (panel.n_periods() as f64).powf(a));

    let terms = c_set
        .indices()
        .par_iter()
        .map(|&t| {
            let loo = sigma_loo(panel, &spec, t).map_err(|e| e.at(t))?;
            let pair = top_eigenpair(&loo.matrix, PowerOptions::default()).map_err(|e| e.at(t))?;
            let y = panel.column(t);
            let dot: f64 = y.iter().zip(&pair.vector).map(|(a, b)| a * b).sum();
            let sign = if dot < 0.0 { -1.0 } else { 1.0 };
            Ok(y.iter()
                .zip(&pair.vector)
                .map(|(yi, li)| {
                    let r = yi * scale - sign * li;
                    r * r
                })
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>();
    match terms {
        Ok(terms) => Ok((terms.iter().sum(), Some(a))),
        Err(e) => infeasible(e),
    }
}

/// `CV(h)`; `+inf` when some leave-one-out window is empty or the
/// eigenproblem fails at this bandwidth.
pub fn cv_score(panel: &Panel, h: f64, c_set: &EvaluationSet) -> Result<f64> {
    evaluate(panel, h, c_set).map(|(s, _)| s)
}

/// Index of the smallest finite score, preferring the smaller bandwidth on ties.
fn argmin(grid: &[f64], scores: &[f64]) -> Option<usize> {
    (0..grid.len())
        .filter(|&k| scores[k].is_finite())
        .min_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(grid[a].total_cmp(&grid[b])))
}

/// Minimizes `CV(h)` over `grid`; ties go to the smaller bandwidth.
pub fn select_bandwidth(panel: &Panel, grid: &[f64], c_set: &EvaluationSet) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidPanel("empty bandwidth grid".into()));
    }
    let evaluated = grid
        .par_iter()
        .map(|&h| evaluate(panel, h, c_set))
        .collect::<Result<Vec<_>>>()?;

    let scores: Vec<f64> = evaluated.iter().map(|e| e.0).collect();
    let best = argmin(grid, &scores);
    let best = best.ok_or(Error::NoFeasibleBandwidth)?;
    let h_hat = grid[best];
    Ok(CvResult {
        h_hat,
        h_grid: grid.to_vec(),
        cv_values: scores,
        h_l: H_LOW_FACTOR * h_hat,
        h_r: H_HIGH_FACTOR * h_hat,
        a_per_h: evaluated.iter().map(|e| e.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::kernel_weight;
    use crate::panel::{eval_set, EvalRule, Region};
    use chrono::NaiveDate;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn panel(values: Array2<f64>) -> Panel {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let (n, t) = values.dim();
        let dates = (0..t).map(|k| d0 + chrono::Days::new(k as u64)).collect();
        let ids = (0..n).map(|i| format!("U{i}")).collect();
        Panel::new(values, vec![0; n], ids, dates, Region::Custom).unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = default_grid(100);
        assert_eq!(g.len(), 20);
        assert!((g[0] - 0.05).abs() < 1e-15);
        assert!((g[19] - 0.5).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!((default_grid(40)[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn proportional_panel_scores_residual_mass_only() {
        // Y_t = sqrt(N) * l for every t: a_h is set by the kernel mass alone
        let l = [0.6, 0.8];
        let t_len = 40;
        let root_n = 2f64.sqrt();
        let v = Array2::from_shape_fn((2, t_len), |(i, _)| root_n * l[i]);
        let p = panel(v);
        let c = eval_set(&p, EvalRule::QuarterTrim).unwrap();
        let h = 0.3;
        let score = cv_score(&p, h, &c).unwrap();
        let s = KernelSpec::epanechnikov(h).unwrap();
        let mass: Vec<f64> = c
            .indices()
            .iter()
            .map(|&t| (0..t_len).map(|k| kernel_weight(&s, p.tau(k), p.tau(t))).sum::<f64>() / t_len as f64)
            .collect();
        let m_bar = mass.iter().sum::<f64>() / mass.len() as f64;
        // T^{a_h} = sqrt(m_bar), residual per t = (1/sqrt(m_bar) - 1)^2
        let expected = c.len() as f64 * (1.0 / m_bar.sqrt() - 1.0).powi(2);
        assert!((score - expected).abs() < 1e-12, "{score} vs {expected}");
        assert!(score < 1e-2);
    }

    #[test]
    fn argmin_prefers_smaller_h_on_ties() {
        assert_eq!(argmin(&[0.1, 0.2, 0.3], &[3.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmin(&[0.3, 0.1, 0.2], &[1.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmin(&[0.1, 0.2], &[f64::INFINITY, f64::INFINITY]), None);
    }

    #[test]
    fn single_candidate_is_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = Array2::from_shape_fn((3, 30), |_| rng.random_range(0.5..2.0));
        let p = panel(v);
        let c = eval_set(&p, EvalRule::QuarterTrim).unwrap();
        let r = select_bandwidth(&p, &[0.2], &c).unwrap();
        assert_eq!(r.h_hat, 0.2);
        assert_eq!(r.h_l, 0.8 * 0.2);
        assert_eq!(r.h_r, 1.2 * 0.2);
    }

    #[test]
    fn infeasible_candidates_are_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = Array2::from_shape_fn((3, 20), |_| rng.random_range(0.5..2.0));
        let p = panel(v);
        let c = eval_set(&p, EvalRule::QuarterTrim).unwrap();
        // below one period spacing: every leave-one-out window is empty
        assert_eq!(cv_score(&p, 0.04, &c).unwrap(), f64::INFINITY);
        assert!(matches!(select_bandwidth(&p, &[0.04, 0.045], &c), Err(Error::NoFeasibleBandwidth)));
        let r = select_bandwidth(&p, &[0.04, 0.3], &c).unwrap();
        assert_eq!(r.h_hat, 0.3);
        assert_eq!(r.a_per_h[0], None);
        assert!(cv_score(&p, 0.0, &c).is_err());
    }

    #[test]
    fn invariant_to_unit_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = Array2::from_shape_fn((4, 40), |(i, t)| (1.0 + i as f64) * (t as f64 + 1.0).sqrt() + rng.random_range(-0.3..0.3));
        let mut rev = v.clone();
        for i in 0..4 {
            rev.row_mut(i).assign(&v.row(3 - i));
        }
        let (p, q) = (panel(v), panel(rev));
        let c = eval_set(&p, EvalRule::QuarterTrim).unwrap();
        for h in [0.15, 0.3] {
            let (a, b) = (cv_score(&p, h, &c).unwrap(), cv_score(&q, h, &c).unwrap());
            assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }
    }

    #[test]
    fn cached_exponents_match_direct_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = Array2::from_shape_fn((3, 50), |(i, t)| (1.0 + i as f64) * (t as f64 + 1.0).powf(0.4) + rng.random_range(-0.2..0.2));
        let p = panel(v);
        let c = eval_set(&p, EvalRule::QuarterTrim).unwrap();
        let grid = default_grid(50);
        let r = select_bandwidth(&p, &grid, &c).unwrap();
        for (h, a) in grid.iter().zip(&r.a_per_h) {
            let curve = lambda_curve(&p, &KernelSpec::epanechnikov(*h).unwrap(), &c).unwrap();
            assert_eq!(a.unwrap(), a_hat(&curve, 50).unwrap());
        }
        assert!(grid.contains(&r.h_hat));
        assert!(r.cv_values[grid.iter().position(|&h| h == r.h_hat).unwrap()].is_finite());
    }
}
