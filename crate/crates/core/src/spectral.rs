//! Leading eigenpair of a symmetric matrix.
//!
//! The production path is power iteration from the fixed start vector
//! `(1, ..., 1) / sqrt(N)`. A converged iterate is accepted only when its
//! eigenvalue dominates the rest of the spectrum,
//! `lambda^2 > ||M||_F^2 - lambda^2`, which rules out locking onto a smaller
//! eigenvalue when the start vector is orthogonal to the top eigenvector.
//! Near-degenerate spectra (Rayleigh quotient settled, residual not) and a
//! failed certificate fall back to a cyclic Jacobi decomposition.
//!
//! Eigenvectors are oriented so that their entries sum to a nonnegative value;
//! if the sum is numerically zero, the entry of largest magnitude is positive.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;

const SYMMETRY_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;
const STAGNATION_WINDOW: usize = 25;
const ORACLE_MAX_N: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPair {
    pub lambda: f64,
    pub vector: Vec<f64>,
    /// Power iterations, or Jacobi sweeps when the fallback was used.
    pub iterations: usize,
    /// `||M v - lambda v||_2`
    pub residual: f64,
}

impl EigenPair {
    pub fn is_degenerate(&self) -> bool {
        self.lambda == 0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

fn check_symmetric(matrix: &Array2<f64>) -> Result<usize> {
    let (rows, cols) = matrix.dim();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    let scale = matrix.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for i in 0..rows {
        for j in (i + 1)..rows {
            worst = worst.max((matrix[[i, j]] - matrix[[j, i]]).abs());
        }
    }
    if worst > SYMMETRY_TOL * scale {
        return Err(Error::Asymmetric { deviation: worst });
    }
    Ok(rows)
}

fn mat_vec(matrix: &Array2<f64>, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = matrix.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(matrix: &Array2<f64>, lambda: f64, v: &[f64]) -> f64 {
    let mut mv = vec![0.0; v.len()];
    mat_vec(matrix, v, &mut mv);
    mv.iter()
        .zip(v)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Applies the orientation convention in place.
pub fn orient(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    let flip = if sum.abs() > 1e-12 {
        sum < 0.0
    } else {
        let mut best = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[best].abs() {
                best = i;
            }
        }
        v[best] < 0.0
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Largest eigenvalue and a unit eigenvector of a symmetric matrix.
pub fn top_eigenpair(matrix: &Array2<f64>, opts: PowerOptions) -> Result<EigenPair> {
    let n = check_symmetric(matrix)?;
    if n == 0 {
        return Err(Error::NotSquare { rows: 0, cols: 0 });
    }
    let frob2: f64 = matrix.iter().map(|x| x * x).sum();
    let start = 1.0 / (n as f64).sqrt();
    if frob2 == 0.0 {
        return Ok(EigenPair {
            lambda: 0.0,
            vector: vec![start; n],
            iterations: 0,
            residual: 0.0,
        });
    }

    let mut v = vec![start; n];
    let mut w = vec![0.0; n];
    let mut prev: Option<f64> = None;
    let mut settled = 0usize;
    let mut last = (0.0, f64::INFINITY);
    for iter in 1..=opts.max_iter {
        mat_vec(matrix, &v, &mut w);
        let lambda: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let res = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        last = (lambda, res);
        let rq_settled = prev
            .map(|p| (lambda - p).abs() <= opts.tol * lambda.abs().max(f64::MIN_POSITIVE))
            .unwrap_or(false);
        let res_ok = res <= RESIDUAL_TOL * lambda.abs().max(1.0);
        if (rq_settled || res == 0.0) && res_ok {
            return certify(matrix, frob2, lambda, v, iter, res);
        }
        if rq_settled {
            settled += 1;
            if settled >= STAGNATION_WINDOW {
                log::debug!("power iteration stagnated after {iter} iterations, using Jacobi");
                return jacobi_top(matrix);
            }
        } else {
            settled = 0;
        }
        prev = Some(lambda);
        let wn = norm(&w);
        if wn == 0.0 {
            // start vector in the null space
            return jacobi_top(matrix);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
    }
    orient(&mut v);
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        lambda: last.0,
        vector: v,
        residual: last.1,
    })
}

fn certify(
    matrix: &Array2<f64>,
    frob2: f64,
    lambda: f64,
    mut v: Vec<f64>,
    iterations: usize,
    res: f64,
) -> Result<EigenPair> {
    let rest = (frob2 - lambda * lambda).max(0.0).sqrt();
    if lambda > 0.0 && rest < lambda * (1.0 - 1e-8) {
        orient(&mut v);
        return Ok(EigenPair {
            lambda,
            vector: v,
            iterations,
            residual: res,
        });
    }
    jacobi_top(matrix)
}

fn jacobi_top(matrix: &Array2<f64>) -> Result<EigenPair> {
    let (values, vectors, sweeps) = jacobi_eigen(matrix);
    let top = values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > values[best] { i } else { best });
    let lambda = values[top];
    let mut v: Vec<f64> = vectors.column(top).to_vec();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    orient(&mut v);
    let res = residual(matrix, lambda, &v);
    Ok(EigenPair {
        lambda,
        vector: v,
        iterations: sweeps,
        residual: res,
    })
}

/// Cyclic Jacobi rotations. Returns unsorted eigenvalues, eigenvectors as
/// columns, and the number of sweeps.
pub(crate) fn jacobi_eigen(matrix: &Array2<f64>) -> (Array1<f64>, Array2<f64>, usize) {
    let n = matrix.nrows();
    let mut a = matrix.clone();
    let mut v = Array2::<f64>::eye(n);
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sweeps = 0;
    while sweeps < 100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * total || off == 0.0 {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diag().to_owned(), v, sweeps)
}

/// All eigenvalues in ascending order; desk-scale matrices only (N <= 64).
pub fn full_spectrum_oracle(matrix: &Array2<f64>) -> Result<Vec<f64>> {
    let n = check_symmetric(matrix)?;
    if n > ORACLE_MAX_N {
        return Err(Error::OracleTooLarge(n));
    }
    let (values, _, _) = jacobi_eigen(matrix);
    let mut out = values.to_vec();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(seed: u64, n: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        b.t().dot(&b)
    }

    fn random_symmetric(seed: u64, n: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        (&b + &b.t()) * 0.5
    }

    #[test]
    fn diagonal_matrix() {
        let e = top_eigenpair(&array![[2.0, 0.0], [0.0, 1.0]], PowerOptions::default()).unwrap();
        assert!((e.lambda - 2.0).abs() < 1e-12);
        assert!((e.vector[0] - 1.0).abs() < 1e-8 && e.vector[1].abs() < 1e-8);
    }

    #[test]
    fn rank_one_matrix() {
        let g = array![3.0, 4.0];
        let m = Array2::from_shape_fn((2, 2), |(i, j)| g[i] * g[j]);
        let e = top_eigenpair(&m, PowerOptions::default()).unwrap();
        assert!((e.lambda - 25.0).abs() < 1e-12);
        assert!((e.vector[0] - 0.6).abs() < 1e-12);
        assert!((e.vector[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn start_vector_orthogonal_to_top() {
        // (1,1) is the eigenvector of the smaller eigenvalue 1
        let m = array![[2.0, -1.0], [-1.0, 2.0]];
        let e = top_eigenpair(&m, PowerOptions::default()).unwrap();
        assert!((e.lambda - 3.0).abs() < 1e-12);
        let m = array![[1.0, -1.0], [-1.0, 1.0]];
        let e = top_eigenpair(&m, PowerOptions::default()).unwrap();
        assert!((e.lambda - 2.0).abs() < 1e-12);
        assert!(e.residual < 1e-12);
    }

    #[test]
    fn indefinite_matrix_returns_algebraic_max() {
        let m = array![[-10.0, 0.0], [0.0, 1.0]];
        let e = top_eigenpair(&m, PowerOptions::default()).unwrap();
        assert!((e.lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_psd_matches_oracle() {
        for seed in 0..20 {
            let m = random_psd(seed, 5);
            let e = top_eigenpair(&m, PowerOptions::default()).unwrap();
            let (values, vectors, _) = jacobi_eigen(&m);
            let top = (0..5).fold(0, |b, i| if values[i] > values[b] { i } else { b });
            assert!((e.lambda - values[top]).abs() < 1e-10, "seed {seed}");
            let dot: f64 = (0..5).map(|i| e.vector[i] * vectors[[i, top]]).sum();
            let nrm: f64 = (0..5).map(|i| vectors[[i, top]].powi(2)).sum::<f64>().sqrt();
            for i in 0..5 {
                let oracle = vectors[[i, top]] / nrm * dot.signum();
                assert!((e.vector[i] - oracle).abs() < 1e-8, "seed {seed}");
            }
            assert!(e.residual <= 1e-10 * e.lambda.max(1.0));
        }
    }

    #[test]
    fn degenerate_top_falls_back() {
        let m = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.5]];
        let e = top_eigenpair(&m, PowerOptions::default()).unwrap();
        assert!((e.lambda - 1.0).abs() < 1e-12);
        assert!(e.residual < 1e-12);
        let nearly = array![[1.0, 0.0], [0.0, 1.0 - 1e-9]];
        let e = top_eigenpair(&nearly, PowerOptions::default()).unwrap();
        assert!((e.lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let e = top_eigenpair(&Array2::zeros((3, 3)), PowerOptions::default()).unwrap();
        assert!(e.is_degenerate());
        assert!((norm(&e.vector) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let m = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(
            top_eigenpair(&m, PowerOptions::default()),
            Err(Error::Asymmetric { .. })
        ));
        let m = random_psd(3, 6);
        let opts = PowerOptions {
            tol: 1e-12,
            max_iter: 1,
        };
        match top_eigenpair(&m, opts) {
            Err(Error::NoConvergence {
                vector, residual, ..
            }) => {
                assert_eq!(vector.len(), 6);
                assert!(residual.is_finite());
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
        assert!(matches!(
            full_spectrum_oracle(&Array2::eye(65)),
            Err(Error::OracleTooLarge(65))
        ));
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(
            full_spectrum_oracle(&Array2::eye(3))
                .unwrap()
                .iter()
                .map(|x| (x * 1e12).round() / 1e12)
                .collect::<Vec<_>>(),
            vec![1.0, 1.0, 1.0]
        );
        let d = full_spectrum_oracle(&array![[-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 5.0]])
            .unwrap();
        assert_eq!(d, vec![-1.0, 0.0, 5.0]);
    }

    #[test]
    fn oracle_residuals_and_trace() {
        for seed in 0..10 {
            let m = random_symmetric(seed, 12);
            let (values, vectors, _) = jacobi_eigen(&m);
            let fro = m.iter().map(|x| x * x).sum::<f64>().sqrt();
            for k in 0..12 {
                let v: Vec<f64> = vectors.column(k).to_vec();
                assert!(residual(&m, values[k], &v) <= 1e-10 * fro);
            }
            let spectrum = full_spectrum_oracle(&m).unwrap();
            let trace: f64 = m.diag().sum();
            assert!((spectrum.iter().sum::<f64>() - trace).abs() < 1e-10);
        }
    }

    #[test]
    fn orientation_rule() {
        let mut v = vec![-0.6, -0.8];
        orient(&mut v);
        assert_eq!(v, vec![0.6, 0.8]);
        let mut v = vec![0.5, -0.9, 0.4];
        orient(&mut v);
        assert_eq!(v, vec![-0.5, 0.9, -0.4]);
    }

    #[test]
    fn bitwise_deterministic() {
        let m = random_psd(42, 8);
        let a = top_eigenpair(&m, PowerOptions::default()).unwrap();
        let b = top_eigenpair(&m, PowerOptions::default()).unwrap();
        assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
        assert!(a.vector.iter().zip(&b.vector).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    proptest! {
        #[test]
        fn scale_equivariance(seed in 0u64..500, c in 0.1f64..50.0) {
            let m = random_psd(seed, 5);
            let a = top_eigenpair(&m, PowerOptions::default()).unwrap();
            let b = top_eigenpair(&(&m * c), PowerOptions::default()).unwrap();
            prop_assert!((b.lambda - c * a.lambda).abs() <= 1e-10 * (c * a.lambda).max(1.0));
            let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
            prop_assert!((dot.abs() - 1.0).abs() < 1e-8);
        }

        #[test]
        fn dominates_diagonal(seed in 0u64..500) {
            let m = random_psd(seed, 6);
            let e = top_eigenpair(&m, PowerOptions::default()).unwrap();
            let max_diag = m.diag().iter().cloned().fold(f64::MIN, f64::max);
            prop_assert!(e.lambda >= max_diag - 1e-10);
            prop_assert!((norm(&e.vector) - 1.0).abs() < 1e-12);
        }
    }
}
