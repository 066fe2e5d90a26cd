//! Small dense linear-algebra helpers shared by the regression modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Relative tolerance used to declare a column linearly dependent on earlier ones.
pub const RANK_TOL: f64 = 1e-10;

pub fn select_columns(x: &DMatrix<f64>, columns: &[usize]) -> DMatrix<f64> {
    x.select_columns(columns)
}

/// Projects the column `u` out of every column of `x` and out of `y`.
///
/// This is how an unpenalized regressor is absorbed before coordinate descent:
/// by Frisch–Waugh–Lovell, coefficients and residuals of the remaining columns
/// are the same as in the regression that includes `u`.
pub fn partial_out(u: &DVector<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let uu = u.norm_squared();
    if uu == 0.0 {
        return (x.clone(), y.clone());
    }
    let mut xp = x.clone();
    for mut col in xp.column_iter_mut() {
        let c = u.dot(&col) / uu;
        col.axpy(-c, u, 1.0);
    }
    let c = u.dot(y) / uu;
    (xp, y - u * c)
}

/// Indices of columns that are (numerically) in the span of the columns before them.
pub fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for (j, col) in x.column_iter().enumerate() {
        let mut v = col.into_owned();
        let norm0 = v.norm();
        if norm0 == 0.0 {
            dependent.push(j);
            continue;
        }
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= RANK_TOL * norm0 {
            dependent.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

/// Inverse of `xᵀx` via Cholesky. Fails if `x` is not of full column rank.
pub fn gram_inverse(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = x.transpose() * x;
    if gram.nrows() == 0 {
        return Ok(gram);
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("Gram matrix is not positive definite".into()))?;
    Ok(chol.inverse())
}

pub struct LeastSquares {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// (xᵀx)⁻¹
    pub gram_inverse: DMatrix<f64>,
}

impl LeastSquares {
    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

/// Ordinary least squares of `y` on `x` with a full-rank check that names the
/// offending columns.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<LeastSquares> {
    let dependent = dependent_columns(x);
    if !dependent.is_empty() {
        return Err(Error::RankDeficient {
            columns: dependent
                .iter()
                .map(|&j| names.get(j).cloned().unwrap_or_else(|| format!("#{j}")))
                .collect(),
        });
    }
    let gram_inverse = gram_inverse(x)?;
    let coefficients = &gram_inverse * (x.transpose() * y);
    let residuals = y - x * &coefficients;
    Ok(LeastSquares {
        coefficients,
        residuals,
        gram_inverse,
    })
}

/// Residual sum of squares and numerical rank of the least-squares fit of `y` on `x`,
/// tolerating rank deficiency (minimum-norm solution).
pub fn rss_and_rank(x: &DMatrix<f64>, y: &DVector<f64>) -> (f64, usize) {
    if x.ncols() == 0 {
        return (y.norm_squared(), 0);
    }
    let svd = x.clone().svd(true, false);
    let smax = svd.singular_values.max();
    let tol = smax * RANK_TOL * (x.nrows().max(x.ncols()) as f64);
    let u = svd.u.as_ref().expect("u requested");
    let mut fitted_sq = 0.0;
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            rank += 1;
            let c = u.column(k).dot(y);
            fitted_sq += c * c;
        }
    }
    ((y.norm_squared() - fitted_sq).max(0.0), rank)
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return f64::NAN;
    }
    SymmetricEigen::new(sym.clone()).eigenvalues.min()
}
