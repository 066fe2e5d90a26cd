//! Lasso with one unpenalized column, the Monte Carlo λ rule and the noise scale.
//!
//! The objective is the unscaled
//!
//! ```text
//! Σ (y − α·u − Xβ)² + λ‖β‖₁
//! ```
//!
//! with `u` the unpenalized column. `u` is projected out of `y` and of every
//! column of `X` first, coordinate descent runs on the residualized problem,
//! and `α` is recovered afterwards. On active coordinates the stationarity
//! condition reads `2·x_jᵀr = λ·s_j`, so soft-thresholding happens at `λ/2`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    /// Relative tolerance on the largest coefficient change per sweep.
    pub tol: f64,
    /// Target KKT residual, relative to λ.
    pub kkt_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_sweeps: 100_000,
            tol: 1e-10,
            kkt_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    /// Coefficient of the unpenalized column (0 when there is none).
    pub alpha: f64,
    pub active: Vec<usize>,
    pub signs: Vec<f64>,
    pub lambda: f64,
    pub kkt_residual: f64,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
}

/// A lasso problem after the unpenalized column has been partialled out.
///
/// Reusable across several λ values (warm starts along a grid).
#[derive(Debug, Clone)]
pub struct PenalizedProblem {
    /// Residualized design.
    pub x: DMatrix<f64>,
    /// Residualized response.
    pub y: DVector<f64>,
    col_sq: Vec<f64>,
    // uᵀy / uᵀu and uᵀX / uᵀu for recovering α
    alpha_y: f64,
    alpha_x: DVector<f64>,
}

impl PenalizedProblem {
    pub fn new(x: &DMatrix<f64>, u: Option<&DVector<f64>>, y: &DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::invalid(format!(
                "design has {} rows but response has {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("lasso inputs contain non-finite values"));
        }
        let (xp, yp, alpha_y, alpha_x) = match u {
            Some(u) => {
                if u.len() != y.len() {
                    return Err(Error::invalid("unpenalized column has the wrong length"));
                }
                let uu = u.norm_squared();
                if uu == 0.0 {
                    return Err(Error::NoTreatmentVariation);
                }
                let (xp, yp) = linalg::partial_out(u, x, y);
                let ax = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| u.dot(&c) / uu));
                (xp, yp, u.dot(y) / uu, ax)
            }
            None => (x.clone(), y.clone(), 0.0, DVector::zeros(x.ncols())),
        };
        let col_sq = xp.column_iter().map(|c| c.norm_squared()).collect();
        Ok(PenalizedProblem {
            x: xp,
            y: yp,
            col_sq,
            alpha_y,
            alpha_x,
        })
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Smallest λ at which β = 0 solves the problem.
    pub fn lambda_max(&self) -> f64 {
        2.0 * (self.x.transpose() * &self.y).amax()
    }

    pub fn objective(&self, beta: &DVector<f64>, lambda: f64) -> f64 {
        (&self.y - &self.x * beta).norm_squared() + lambda * beta.lp_norm(1)
    }

    /// Largest violation of the subgradient conditions.
    pub fn kkt_residual(&self, beta: &DVector<f64>, lambda: f64) -> f64 {
        let r = &self.y - &self.x * beta;
        let grad = self.x.transpose() * r * 2.0;
        let mut worst: f64 = 0.0;
        for j in 0..beta.len() {
            let v = if beta[j] != 0.0 {
                (grad[j] - lambda * beta[j].signum()).abs()
            } else {
                (grad[j].abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    fn kkt_target(&self, lambda: f64, cfg: &SolverConfig) -> f64 {
        // The absolute floor only matters for λ ≈ 0, where round-off in the
        // gradient dominates.
        let scale = self.col_sq.iter().cloned().fold(0.0, f64::max).sqrt() * self.y.norm();
        (cfg.kkt_tol * lambda).max(1e-11 * scale)
    }

    pub fn solve(&self, lambda: f64, warm: Option<&DVector<f64>>, cfg: &SolverConfig) -> Result<LassoFit> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("λ must be a finite non-negative number, got {lambda}")));
        }
        let p = self.p();
        let mut beta = match warm {
            Some(w) if w.len() == p => w.clone(),
            _ => DVector::zeros(p),
        };
        let mut r = &self.y - &self.x * &beta;
        let half = 0.5 * lambda;
        let target = self.kkt_target(lambda, cfg);
        let mut sweeps = 0;
        let mut last_change = f64::INFINITY;
        loop {
            if sweeps >= cfg.max_sweeps {
                let kkt = self.kkt_residual(&beta, lambda);
                return Err(Error::NotConverged {
                    sweeps,
                    change: last_change,
                    kkt_residual: kkt,
                });
            }
            sweeps += 1;
            let mut max_change: f64 = 0.0;
            for j in 0..p {
                let cj = self.col_sq[j];
                if cj == 0.0 {
                    beta[j] = 0.0;
                    continue;
                }
                let col = self.x.column(j);
                let old = beta[j];
                let z = col.dot(&r) + cj * old;
                let new = soft_threshold(z, half) / cj;
                if new != old {
                    r.axpy(old - new, &col, 1.0);
                    beta[j] = new;
                    max_change = max_change.max((new - old).abs());
                }
            }
            last_change = max_change;
            let bmax = beta.amax();
            if max_change < cfg.tol * (1.0 + bmax) {
                if let Some(polished) = self.polish(&beta, lambda, target) {
                    beta = polished;
                }
                let kkt = self.kkt_residual(&beta, lambda);
                if kkt <= target {
                    return Ok(self.finish(beta, lambda, kkt, sweeps));
                }
                // not certified yet; recompute the residual to shed drift
                r = &self.y - &self.x * &beta;
            }
        }
    }

    /// Solves the stationarity equations on the current active set with its
    /// signs fixed; accepted only if the result is sign-consistent and
    /// certifies the inactive coordinates.
    fn polish(&self, beta: &DVector<f64>, lambda: f64, target: f64) -> Option<DVector<f64>> {
        let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        if active.is_empty() {
            return None;
        }
        let xa = self.x.select_columns(&active);
        let gram = xa.transpose() * &xa;
        let chol = gram.cholesky()?;
        let signs = DVector::from_iterator(active.len(), active.iter().map(|&j| beta[j].signum()));
        let rhs = xa.transpose() * &self.y - &signs * (0.5 * lambda);
        let ba = chol.solve(&rhs);
        if ba.iter().zip(signs.iter()).any(|(b, s)| b * s <= 0.0) {
            return None;
        }
        let mut out = DVector::zeros(beta.len());
        for (k, &j) in active.iter().enumerate() {
            out[j] = ba[k];
        }
        if self.kkt_residual(&out, lambda) <= target {
            Some(out)
        } else {
            None
        }
    }

    fn finish(&self, beta: DVector<f64>, lambda: f64, kkt: f64, sweeps: usize) -> LassoFit {
        let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        let signs = active.iter().map(|&j| beta[j].signum()).collect();
        let alpha = self.alpha_y - self.alpha_x.dot(&beta);
        LassoFit {
            beta,
            alpha,
            active,
            signs,
            lambda,
            kkt_residual: kkt,
            sweeps,
        }
    }
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Minimizes `Σ(y − α·u − Xβ)² + λ‖β‖₁` with default solver settings.
pub fn solve_lasso(x: &DMatrix<f64>, u: Option<&DVector<f64>>, y: &DVector<f64>, lambda: f64) -> Result<LassoFit> {
    PenalizedProblem::new(x, u, y)?.solve(lambda, None, &SolverConfig::default())
}

/// Monte Carlo estimate of `E‖Xᵀε‖∞` for `ε ~ N(0, I_n)`.
///
/// Multiply by σ̂ (and the rule's multiplier) to get λ; keeping σ outside the
/// draws makes λ exactly linear in σ̂ for a fixed seed.
pub fn expected_max_inner(x: &DMatrix<f64>, n_draws: usize, seed: u64) -> f64 {
    let n = x.nrows();
    if n_draws == 0 || x.ncols() == 0 {
        return 0.0;
    }
    let mut rng = rng::stream(seed, 0);
    let xt = x.transpose();
    let mut eps = DVector::zeros(n);
    let mut total = 0.0;
    for _ in 0..n_draws {
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        total += (&xt * &eps).amax();
    }
    total / n_draws as f64
}

/// Rule for picking λ from a noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaRule {
    pub multiplier: f64,
    pub draws: usize,
    /// Halves λ so that the rule bounds `‖Xᵀε‖∞` in the stationarity scale
    /// (`2·Xᵀr = λs`) rather than in the objective's λ. See `kkt_scale`.
    pub kkt_scale: bool,
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule {
            multiplier: 1.1,
            draws: 200,
            kkt_scale: true,
        }
    }
}

/// `multiplier · σ̂ · E‖Xᵀε‖∞`, times 2 if `kkt_scale` is set (see [`LambdaRule`]).
pub fn choose_lambda(x: &DMatrix<f64>, sigma_hat: f64, rule: &LambdaRule, seed: u64) -> Result<f64> {
    if !(sigma_hat >= 0.0) || !sigma_hat.is_finite() {
        return Err(Error::invalid(format!("σ̂ must be finite and non-negative, got {sigma_hat}")));
    }
    if rule.draws == 0 {
        return Err(Error::invalid("λ rule needs at least one draw"));
    }
    if !(rule.multiplier > 0.0) {
        return Err(Error::invalid("λ multiplier must be positive"));
    }
    let e = expected_max_inner(x, rule.draws, seed);
    let scale = if rule.kkt_scale { 2.0 } else { 1.0 };
    Ok(scale * rule.multiplier * sigma_hat * e)
}

/// σ̂ from the unpenalized regression of `y` on all columns of `x` plus `u`,
/// with divisor `n − p − 1`.
pub fn estimate_sigma(x: &DMatrix<f64>, u: Option<&DVector<f64>>, y: &DVector<f64>) -> Result<f64> {
    let n = x.nrows();
    let p = x.ncols();
    if n <= p + 1 {
        return Err(Error::Saturated { n, p });
    }
    let (xp, yp) = match u {
        Some(u) => linalg::partial_out(u, x, y),
        None => (x.clone(), y.clone()),
    };
    let (rss, _) = linalg::rss_and_rank(&xp, &yp);
    Ok((rss / (n - p - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedFit {
    /// Coefficients on the model columns, in model order.
    pub beta: DVector<f64>,
    pub alpha: f64,
    pub residuals: DVector<f64>,
    /// `(X_Mᵀ X_M)⁻¹` on the residualized columns.
    pub gram_inverse: DMatrix<f64>,
}

/// Unpenalized least squares on the model columns with `u` partialled out.
pub fn relaxed_fit(
    x: &DMatrix<f64>,
    u: Option<&DVector<f64>>,
    y: &DVector<f64>,
    model: &[usize],
    names: &[String],
) -> Result<RelaxedFit> {
    let xm = x.select_columns(model);
    let model_names: Vec<String> = model
        .iter()
        .map(|&j| names.get(j).cloned().unwrap_or_else(|| format!("#{j}")))
        .collect();
    let (xp, yp) = match u {
        Some(u) => {
            if u.norm_squared() == 0.0 {
                return Err(Error::NoTreatmentVariation);
            }
            linalg::partial_out(u, &xm, y)
        }
        None => (xm.clone(), y.clone()),
    };
    let ls = linalg::least_squares(&xp, &yp, &model_names)?;
    let alpha = match u {
        Some(u) => u.dot(&(y - &xm * &ls.coefficients)) / u.norm_squared(),
        None => 0.0,
    };
    Ok(RelaxedFit {
        beta: ls.coefficients,
        alpha,
        residuals: ls.residuals,
        gram_inverse: ls.gram_inverse,
    })
}
