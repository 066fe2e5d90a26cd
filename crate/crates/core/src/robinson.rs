//! Robinson's residual-on-residual transformation and the fixed-model analyses.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, DesignSpec};
use crate::linalg;
use crate::normal;
use crate::nuisance::NuisanceFit;
use crate::{Error, Result};

/// How the intercept of the effect-modification model is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterceptMode {
    /// `α` multiplies the unpenalized column `t̃`.
    #[default]
    TreatmentColumn,
    /// Center `ỹ` and the columns of `X̃` and drop `α`.
    CenterDropAlpha,
}

#[derive(Debug, Clone)]
pub struct TransformedRegression {
    pub y_tilde: DVector<f64>,
    pub t_tilde: DVector<f64>,
    pub x_tilde: DMatrix<f64>,
    /// Means removed from the columns of `x_tilde` (centering mode only).
    pub column_means: Option<DVector<f64>>,
    /// Mean removed from `y_tilde` (centering mode only).
    pub y_mean: Option<f64>,
    pub names: Vec<String>,
    pub mode: InterceptMode,
}

impl TransformedRegression {
    pub fn n(&self) -> usize {
        self.y_tilde.len()
    }

    pub fn p(&self) -> usize {
        self.x_tilde.ncols()
    }

    /// The column absorbed without penalty, if any.
    pub fn unpenalized(&self) -> Option<&DVector<f64>> {
        match self.mode {
            InterceptMode::TreatmentColumn => Some(&self.t_tilde),
            InterceptMode::CenterDropAlpha => None,
        }
    }

    /// `(X̃, ỹ)` with the unpenalized column projected out.
    pub fn residualized(&self) -> (DMatrix<f64>, DVector<f64>) {
        match self.unpenalized() {
            Some(u) => linalg::partial_out(u, &self.x_tilde, &self.y_tilde),
            None => (self.x_tilde.clone(), self.y_tilde.clone()),
        }
    }

    /// Degrees of freedom left after fitting `k` modifier columns.
    pub fn residual_df(&self, k: usize) -> usize {
        self.n().saturating_sub(k + 1)
    }
}

/// Builds `ỹ = Y − μ̂_y`, `t̃ = T − μ̂_t` and `X̃_j = t̃ ⊙ Z_j`, with `Z` the
/// effect modifiers described by `spec`.
pub fn transform(d: &Dataset, nf: &NuisanceFit, spec: &DesignSpec, mode: InterceptMode) -> Result<TransformedRegression> {
    let n = d.n();
    if nf.mu_t_hat.len() != n || nf.mu_y_hat.len() != n {
        return Err(Error::invalid("nuisance fit does not match the dataset"));
    }
    let z = dataset::expand_interactions(d, spec)?;
    let t_tilde = &d.t - &nf.mu_t_hat;
    if t_tilde.iter().all(|&v| v == 0.0) {
        return Err(Error::NoTreatmentVariation);
    }
    let y_tilde = &d.y - &nf.mu_y_hat;
    let mut x_tilde = z.x.clone();
    for mut col in x_tilde.column_iter_mut() {
        col.component_mul_assign(&t_tilde);
    }
    let mut tr = TransformedRegression {
        y_tilde,
        t_tilde,
        x_tilde,
        column_means: None,
        y_mean: None,
        names: z.covariate_names,
        mode,
    };
    if mode == InterceptMode::CenterDropAlpha {
        let (xc, means) = dataset::center_columns(&tr.x_tilde);
        let ym = tr.y_tilde.mean();
        tr.x_tilde = xc;
        tr.y_tilde.add_scalar_mut(-ym);
        tr.column_means = Some(means);
        tr.y_mean = Some(ym);
    }
    Ok(tr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AteEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Regression of `ỹ` on `t̃` through the origin with a normal-theory interval.
pub fn estimate_ate(tr: &TransformedRegression, q: f64) -> Result<AteEstimate> {
    check_level(q)?;
    let t = &tr.t_tilde;
    let tt = t.norm_squared();
    if tt == 0.0 {
        return Err(Error::NoTreatmentVariation);
    }
    let y = match tr.y_mean {
        Some(m) => tr.y_tilde.add_scalar(m),
        None => tr.y_tilde.clone(),
    };
    let estimate = t.dot(&y) / tt;
    let n = y.len();
    let rss = (&y - t * estimate).norm_squared();
    let sigma = (rss / (n - 1) as f64).sqrt();
    let std_error = sigma / tt.sqrt();
    let z = normal::two_sided_critical(q);
    Ok(AteEstimate {
        estimate,
        std_error,
        ci_low: estimate - z * std_error,
        ci_high: estimate + z * std_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedModelInference {
    pub names: Vec<String>,
    pub coefficients: DVector<f64>,
    pub standard_errors: DVector<f64>,
    pub p_values: DVector<f64>,
    pub ci_lower: DVector<f64>,
    pub ci_upper: DVector<f64>,
    pub sigma2_hat: f64,
}

fn check_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("level q must lie in (0, 1), got {q}")))
    }
}

fn wald(names: Vec<String>, coefficients: DVector<f64>, variances: DVector<f64>, sigma2_hat: f64, q: f64) -> FixedModelInference {
    let z = normal::two_sided_critical(q);
    let standard_errors = variances.map(f64::sqrt);
    let p_values = DVector::from_fn(coefficients.len(), |k, _| {
        let se = standard_errors[k];
        if se > 0.0 {
            (2.0 * normal::sf((coefficients[k] / se).abs())).min(1.0)
        } else if coefficients[k] == 0.0 {
            1.0
        } else {
            0.0
        }
    });
    let ci_lower = DVector::from_fn(coefficients.len(), |k, _| coefficients[k] - z * standard_errors[k]);
    let ci_upper = DVector::from_fn(coefficients.len(), |k, _| coefficients[k] + z * standard_errors[k]);
    FixedModelInference {
        names,
        coefficients,
        standard_errors,
        p_values,
        ci_lower,
        ci_upper,
        sigma2_hat,
    }
}

/// OLS of `Y` on `[1, X, T, T·X]`, reporting the `T·X` block.
pub fn naive_linear_model(d: &Dataset, q: f64) -> Result<FixedModelInference> {
    check_level(q)?;
    let (n, p) = (d.n(), d.p());
    let k = 2 * p + 2;
    if n <= k {
        return Err(Error::Saturated { n, p: k - 1 });
    }
    let mut design = DMatrix::zeros(n, k);
    let mut names = Vec::with_capacity(k);
    design.column_mut(0).fill(1.0);
    names.push("(Intercept)".to_string());
    for j in 0..p {
        design.set_column(1 + j, &d.x.column(j));
        names.push(d.covariate_names[j].clone());
    }
    design.set_column(p + 1, &d.t);
    names.push("treatment".to_string());
    for j in 0..p {
        design.set_column(p + 2 + j, &d.x.column(j).component_mul(&d.t));
        names.push(format!("treatment{}{}", dataset::INTERACTION_SEP, d.covariate_names[j]));
    }
    let ls = linalg::least_squares(&design, &d.y, &names)?;
    let sigma2 = ls.rss() / (n - k) as f64;
    let block = (p + 2)..k;
    let coefficients = DVector::from_iterator(p, block.clone().map(|j| ls.coefficients[j]));
    let variances = DVector::from_iterator(p, block.map(|j| sigma2 * ls.gram_inverse[(j, j)]));
    Ok(wald(d.covariate_names.clone(), coefficients, variances, sigma2, q))
}

/// Least squares of `ỹ` on the model columns of `X̃` (plus the unpenalized
/// column), with variances `σ̂²·[(X̃_MᵀX̃_M)⁻¹]_jj`.
///
/// `sigma` overrides the residual-based σ̂ (divisor `n − |M| − 1`).
pub fn fixed_model_inference(
    tr: &TransformedRegression,
    model: &[usize],
    q: f64,
    sigma: Option<f64>,
) -> Result<FixedModelInference> {
    check_level(q)?;
    if let Some(&j) = model.iter().find(|&&j| j >= tr.p()) {
        return Err(Error::invalid(format!("model column {j} out of range")));
    }
    let fit = crate::lasso::relaxed_fit(&tr.x_tilde, tr.unpenalized(), &tr.y_tilde, model, &tr.names)?;
    let sigma2 = match sigma {
        Some(s) => s * s,
        None => {
            let df = tr.residual_df(model.len());
            if df == 0 {
                return Err(Error::Saturated { n: tr.n(), p: model.len() });
            }
            fit.residuals.norm_squared() / df as f64
        }
    };
    let variances = fit.gram_inverse.diagonal() * sigma2;
    let names = model.iter().map(|&j| tr.names[j].clone()).collect();
    Ok(wald(names, fit.beta, variances, sigma2, q))
}

/// Weighted projection of Δ onto `α + X_M β` with weights `(T − μ_t)²`.
///
/// Returns `(α*, β*_M)`.
pub fn target_beta_star(
    delta: &DVector<f64>,
    t: &DVector<f64>,
    mu_t: &DVector<f64>,
    x: &DMatrix<f64>,
    model: &[usize],
) -> Result<(f64, DVector<f64>)> {
    let n = delta.len();
    if t.len() != n || mu_t.len() != n || x.nrows() != n {
        return Err(Error::invalid("length mismatch in target computation"));
    }
    let w = (t - mu_t).map(|v| v.abs());
    // √w-scaled regression with an intercept column
    let k = model.len() + 1;
    let design = DMatrix::from_fn(n, k, |i, c| if c == 0 { w[i] } else { w[i] * x[(i, model[c - 1])] });
    let response = delta.component_mul(&w);
    let gram = design.transpose() * &design;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("weighted Gram matrix of the target is singular".into()))?;
    let coef = chol.solve(&(design.transpose() * response));
    Ok((coef[0], coef.rows(1, model.len()).into_owned()))
}
