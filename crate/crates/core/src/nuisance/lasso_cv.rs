//! Lasso regression with λ chosen by k-fold cross-validation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::lasso::{PenalizedProblem, SolverConfig};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoCvParams {
    pub k_folds: usize,
    pub grid_size: usize,
    pub seed: u64,
}

impl Default for LassoCvParams {
    fn default() -> Self {
        LassoCvParams {
            k_folds: 10,
            grid_size: 100,
            seed: 0,
        }
    }
}

/// Affine predictor on the original feature scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    pub intercept: f64,
    pub coefficients: DVector<f64>,
}

impl LinearPredictor {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        (x * &self.coefficients).add_scalar(self.intercept)
    }

    pub fn nonzero(&self) -> usize {
        self.coefficients.iter().filter(|&&b| b != 0.0).count()
    }
}

#[derive(Debug, Clone)]
pub struct LassoCvFit {
    pub predictor: LinearPredictor,
    /// λ grid on the full-sample scale, largest first.
    pub grid: Vec<f64>,
    pub cv_error: Vec<f64>,
    pub chosen: usize,
}

impl LassoCvFit {
    pub fn lambda(&self) -> f64 {
        self.grid[self.chosen]
    }
}

/// Log-spaced grid from `lambda_max` down to `1e-3·lambda_max`.
pub fn lambda_grid(lambda_max: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return vec![lambda_max];
    }
    (0..size)
        .map(|k| lambda_max * 10f64.powf(-3.0 * k as f64 / (size - 1) as f64))
        .collect()
}

fn standardize(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let n = x.nrows() as f64;
    let means = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let sds = DVector::from_iterator(
        x.ncols(),
        x.column_iter()
            .enumerate()
            .map(|(j, c)| (c.iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / n).sqrt()),
    );
    let xs = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        if sds[j] > 0.0 {
            (x[(i, j)] - means[j]) / sds[j]
        } else {
            0.0
        }
    });
    (xs, means, sds)
}

fn rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    m.select_rows(idx)
}

pub fn fit_lasso_cv(x: &DMatrix<f64>, y: &DVector<f64>, params: &LassoCvParams) -> Result<LassoCvFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::invalid("lasso targets do not match the feature rows"));
    }
    if params.k_folds < 2 || n < params.k_folds {
        return Err(Error::invalid(format!(
            "cross-validation needs 2 ≤ k_folds ≤ n (k_folds = {}, n = {n})",
            params.k_folds
        )));
    }
    if params.grid_size == 0 {
        return Err(Error::invalid("λ grid must not be empty"));
    }
    let (xs, means, sds) = standardize(x);
    let ones = DVector::from_element(n, 1.0);
    let full = PenalizedProblem::new(&xs, Some(&ones), y)?;
    let lambda_max = full.lambda_max();
    let cfg = SolverConfig::default();

    if lambda_max == 0.0 {
        return Ok(LassoCvFit {
            predictor: LinearPredictor {
                intercept: y.mean(),
                coefficients: DVector::zeros(p),
            },
            grid: vec![0.0],
            cv_error: vec![0.0],
            chosen: 0,
        });
    }
    let grid = lambda_grid(lambda_max, params.grid_size);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(params.seed, 0));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % params.k_folds;
    }

    let mut sse = vec![0.0; grid.len()];
    for k in 0..params.k_folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == k).collect();
        let xt = rows(&xs, &train);
        let yt = y.select_rows(&train);
        let xv = rows(&xs, &test);
        let yv = y.select_rows(&test);
        let ones_t = DVector::from_element(train.len(), 1.0);
        let prob = PenalizedProblem::new(&xt, Some(&ones_t), &yt)?;
        // the unscaled objective grows with n, so keep λ per observation fixed
        let scale = train.len() as f64 / n as f64;
        let mut warm: Option<DVector<f64>> = None;
        for (g, &lam) in grid.iter().enumerate() {
            let fit = prob.solve(lam * scale, warm.as_ref(), &cfg)?;
            let pred = (&xv * &fit.beta).add_scalar(fit.alpha);
            sse[g] += (&yv - pred).norm_squared();
            warm = Some(fit.beta);
        }
    }
    let cv_error: Vec<f64> = sse.iter().map(|s| s / n as f64).collect();
    let chosen = cv_error
        .iter()
        .enumerate()
        .fold(0, |best, (g, &e)| if e < cv_error[best] { g } else { best });

    let mut warm: Option<DVector<f64>> = None;
    let mut fit = None;
    for &lam in &grid[..=chosen] {
        let f = full.solve(lam, warm.as_ref(), &cfg)?;
        warm = Some(f.beta.clone());
        fit = Some(f);
    }
    let fit = fit.expect("grid is non-empty");
    let coefficients = DVector::from_fn(p, |j, _| if sds[j] > 0.0 { fit.beta[j] / sds[j] } else { 0.0 });
    let intercept = fit.alpha - coefficients.dot(&means);
    Ok(LassoCvFit {
        predictor: LinearPredictor {
            intercept,
            coefficients,
        },
        grid,
        cv_error,
        chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid(4.0, 5);
        assert_eq!(g[0], 4.0);
        assert!((g[4] - 4e-3).abs() < 1e-15);
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let mut r = rng::stream(1, 0);
        let x = DMatrix::from_fn(30, 4, |_, _| r.random::<f64>());
        let y = DVector::from_fn(30, |_, _| r.random::<f64>());
        let prob = PenalizedProblem::new(&x, None, &y).unwrap();
        let lmax = 2.0 * (x.transpose() * &y).amax();
        assert_eq!(prob.lambda_max(), lmax);
        let fit = prob.solve(lmax, None, &SolverConfig::default()).unwrap();
        assert!(fit.is_empty());
        // KKT at zero: |2 x_jᵀ y| ≤ λ for every j
        assert!((x.transpose() * &y * 2.0).amax() <= lmax);
    }

    #[test]
    fn exact_linear_signal() {
        let mut r = rng::stream(2, 0);
        let x = DMatrix::from_fn(100, 5, |_, _| r.random::<f64>());
        let y = x.column(0) * 2.0;
        let fit = fit_lasso_cv(&x, &y.clone_owned(), &LassoCvParams::default()).unwrap();
        let pred = fit.predictor.predict(&x);
        let ss_res = (&y - &pred).norm_squared();
        let ss_tot = y.add_scalar(-y.mean()).norm_squared();
        assert!(1.0 - ss_res / ss_tot > 0.999);
    }

    #[test]
    fn folds_are_deterministic() {
        let mut r = rng::stream(3, 0);
        let x = DMatrix::from_fn(60, 3, |_, _| r.random::<f64>());
        let y = DVector::from_fn(60, |i, _| x[(i, 1)] + 0.1 * r.random::<f64>());
        let params = LassoCvParams {
            k_folds: 5,
            grid_size: 20,
            seed: 7,
        };
        let a = fit_lasso_cv(&x, &y, &params).unwrap();
        let b = fit_lasso_cv(&x, &y, &params).unwrap();
        assert_eq!(a.predictor, b.predictor);
        assert_eq!(a.cv_error, b.cv_error);
    }
}
