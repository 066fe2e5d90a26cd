//! Truncated-Gaussian pivot: CDF, selective p-values and interval inversion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::lasso::{self, LambdaRule, LassoFit, PenalizedProblem, SolverConfig};
use crate::normal;
use crate::report::{ReportMode, ReportRow, SelectiveReport};
use crate::robinson::{self, TransformedRegression};
use crate::selection::{self, TruncationInterval};
use crate::{Error, Result};

/// Bracket expansion gives up beyond this many standard errors from the estimate.
pub const BRACKET_LIMIT: f64 = 1e3;
/// Bisection stops when the bracket is narrower than this many standard errors.
pub const BISECTION_TOL: f64 = 1e-10;

/// CDF at `z` of a standard normal truncated to `[a, b]` (standardized units).
///
/// Works in log space whenever the interval lies in one tail, so that the
/// ratio stays accurate when both endpoints are far from zero.
pub fn standard_truncated_cdf(z: f64, a: f64, b: f64) -> f64 {
    if z <= a {
        return 0.0;
    }
    if z >= b {
        return 1.0;
    }
    let f = if a >= 0.0 {
        // upper tail: (Q(a) − Q(z)) / (Q(a) − Q(b)), Q = 1 − Φ
        let la = normal::log_sf(a);
        (normal::log_sf(z) - la).exp_m1() / (normal::log_sf(b) - la).exp_m1()
    } else if b <= 0.0 {
        // lower tail: (Φ(z) − Φ(a)) / (Φ(b) − Φ(a))
        let (la, lz, lb) = (normal::log_cdf(a), normal::log_cdf(z), normal::log_cdf(b));
        (lz - lb).exp() * (la - lz).exp_m1() / (la - lb).exp_m1()
    } else {
        let den = 0.5 * (normal::erf(b * std::f64::consts::FRAC_1_SQRT_2) - normal::erf(a * std::f64::consts::FRAC_1_SQRT_2));
        if z <= 0.0 {
            let lz = normal::log_cdf(z);
            -(lz.exp()) * (normal::log_cdf(a) - lz).exp_m1() / den
        } else {
            let lz = normal::log_sf(z);
            let upper_mass = -(lz.exp()) * (normal::log_sf(b) - lz).exp_m1();
            1.0 - upper_mass / den
        }
    };
    f.clamp(0.0, 1.0)
}

/// Survival function `1 − F` of the same truncated law, accurate near zero.
pub fn standard_truncated_sf(z: f64, a: f64, b: f64) -> f64 {
    standard_truncated_cdf(-z, -b, -a)
}

fn standardize(y: f64, mu: f64, sigma2: f64, l: f64, u: f64) -> Result<(f64, f64, f64)> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid(format!("variance must be positive and finite, got {sigma2}")));
    }
    if l.is_nan() || u.is_nan() || y.is_nan() || mu.is_nan() {
        return Err(Error::invalid("NaN passed to the truncated normal"));
    }
    if !(l < u) {
        return Err(Error::InvertedInterval { lower: l, upper: u });
    }
    let s = sigma2.sqrt();
    let a = (l - mu) / s;
    let b = (u - mu) / s;
    let z = ((y - mu) / s).clamp(a, b);
    Ok((z, a, b))
}

/// `P(W ≤ y)` for `W ~ N(mu, sigma2)` conditioned on `l ≤ W ≤ u`.
pub fn truncated_normal_cdf(y: f64, mu: f64, sigma2: f64, l: f64, u: f64) -> Result<f64> {
    let (z, a, b) = standardize(y, mu, sigma2, l, u)?;
    Ok(standard_truncated_cdf(z, a, b))
}

/// `P(W > y)` for the same law.
pub fn truncated_normal_sf(y: f64, mu: f64, sigma2: f64, l: f64, u: f64) -> Result<f64> {
    let (z, a, b) = standardize(y, mu, sigma2, l, u)?;
    Ok(standard_truncated_sf(z, a, b))
}

/// Pivot value and two-sided p-value `2·min(P, 1 − P)` for the null that the
/// targeted coefficient is zero.
pub fn selective_pvalue(beta_hat: f64, interval: &TruncationInterval, sigma: f64) -> Result<(f64, f64)> {
    let var = sigma * sigma * interval.eta_norm2;
    let (l, u) = (interval.lower, interval.upper);
    let pivot = truncated_normal_cdf(beta_hat, 0.0, var, l, u)?;
    let upper = truncated_normal_sf(beta_hat, 0.0, var, l, u)?;
    Ok((pivot, (2.0 * pivot.min(upper)).min(1.0)))
}

/// Root of a decreasing function, starting the bracket at `x0` and stepping
/// by multiples of `scale`.
fn decreasing_root(g: impl Fn(f64) -> f64, x0: f64, scale: f64) -> Result<f64> {
    let limit = BRACKET_LIMIT * scale;
    let g0 = g(x0);
    if g0 == 0.0 {
        return Ok(x0);
    }
    let dir = if g0 > 0.0 { 1.0 } else { -1.0 };
    let mut step = scale;
    let mut near = x0;
    let mut far = x0 + dir * step;
    while g(far) * dir > 0.0 {
        if step > limit {
            return Err(Error::UnboundedInterval { limit });
        }
        near = far;
        step *= 2.0;
        far = x0 + dir * step;
    }
    // g(near)·dir > 0 ≥ g(far)·dir
    let (mut lo, mut hi) = if dir > 0.0 { (near, far) } else { (far, near) };
    let tol = BISECTION_TOL * scale;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Selective interval `[d⁻, d⁺]` with `F(β̂; d⁻) = 1 − q/2` and `F(β̂; d⁺) = q/2`.
///
/// `F` is decreasing in the mean; the lower endpoint is found on the survival
/// function so that it is resolved to full precision.
pub fn invert_pivot(beta_hat: f64, interval: &TruncationInterval, sigma: f64, q: f64) -> Result<(f64, f64)> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("level q must lie in (0, 1), got {q}")));
    }
    let var = sigma * sigma * interval.eta_norm2;
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::invalid("pivot inversion needs a positive standard error"));
    }
    // validate once; the root searches below cannot fail on bad inputs
    truncated_normal_cdf(beta_hat, 0.0, var, interval.lower, interval.upper)?;
    let (lo, hi) = endpoint_roots(beta_hat, interval, sd, q);
    Ok((lo?, hi?))
}

fn endpoint_roots(beta_hat: f64, iv: &TruncationInterval, sd: f64, q: f64) -> (Result<f64>, Result<f64>) {
    let half = 0.5 * q;
    let (l, u) = (iv.lower, iv.upper);
    let standardized = |mu: f64| {
        let (a, b) = ((l - mu) / sd, (u - mu) / sd);
        (((beta_hat - mu) / sd).clamp(a, b), a, b)
    };
    let d_plus = decreasing_root(
        |mu| {
            let (z, a, b) = standardized(mu);
            standard_truncated_cdf(z, a, b) - half
        },
        beta_hat,
        sd,
    );
    let d_minus = decreasing_root(
        |mu| {
            let (z, a, b) = standardized(mu);
            half - standard_truncated_sf(z, a, b)
        },
        beta_hat,
        sd,
    );
    (d_minus, d_plus)
}

/// How λ is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    Rule(LambdaRule),
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Rule(LambdaRule::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Miscoverage level: intervals have coverage `1 − q`.
    pub q: f64,
    /// Known noise scale; estimated from the full regression when absent.
    pub sigma: Option<f64>,
    pub lambda: LambdaChoice,
    /// Seed of the λ-rule Monte Carlo.
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            q: 0.05,
            sigma: None,
            lambda: LambdaChoice::default(),
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

/// Everything the lasso step produced, shared by the selective and snooping reports.
#[derive(Debug, Clone)]
pub struct Selection {
    pub sigma: f64,
    pub lambda: f64,
    pub fit: LassoFit,
    /// Design and response with the unpenalized column projected out.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Selection {
    pub fn model(&self) -> &[usize] {
        &self.fit.active
    }
}

/// σ̂ (or the override), λ and the lasso fit.
pub fn select(tr: &TransformedRegression, cfg: &AnalysisConfig) -> Result<Selection> {
    if !(cfg.q > 0.0 && cfg.q < 1.0) {
        return Err(Error::invalid(format!("level q must lie in (0, 1), got {}", cfg.q)));
    }
    let sigma = match cfg.sigma {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::invalid(format!("--sigma must be positive, got {s}"))),
        None => lasso::estimate_sigma(&tr.x_tilde, tr.unpenalized(), &tr.y_tilde)?,
    };
    let problem = PenalizedProblem::new(&tr.x_tilde, tr.unpenalized(), &tr.y_tilde)?;
    let lambda = match cfg.lambda {
        LambdaChoice::Fixed(l) => l,
        LambdaChoice::Rule(rule) => lasso::choose_lambda(&problem.x, sigma, &rule, cfg.seed)?,
    };
    if lambda == 0.0 {
        return Err(Error::ZeroLambda);
    }
    let fit = problem.solve(lambda, None, &cfg.solver)?;
    Ok(Selection {
        sigma,
        lambda,
        fit,
        x: problem.x,
        y: problem.y,
    })
}

/// Selective p-values and intervals for every selected coefficient.
pub fn selective_report(tr: &TransformedRegression, sel: &Selection, q: f64) -> Result<SelectiveReport> {
    let mut notes = Vec::new();
    let model = sel.model();
    if model.is_empty() {
        notes.push("lasso selected no effect modifiers; nothing to report".to_string());
        return Ok(SelectiveReport {
            rows: Vec::new(),
            sigma_used: sel.sigma,
            lambda_used: sel.lambda,
            mode: ReportMode::Selective,
            diagnostics: Some(selection::diagnostics(None, &[], &sel.fit.beta, &sel.x, sel.sigma)),
            notes,
        });
    }
    let ev = selection::build_event(&sel.fit, &sel.x, &sel.y)?;
    let relaxed = ev.pinv.clone() * &sel.y;
    let mut rows = Vec::with_capacity(model.len());
    let mut intervals = Vec::with_capacity(model.len());
    for (k, &j) in model.iter().enumerate() {
        let iv = selection::truncation_interval(&ev, &sel.y, k)?;
        let estimate = relaxed[k];
        let (pivot, p_value) = selective_pvalue(estimate, &iv, sel.sigma)?;
        let (ci_low, ci_high) = match invert_pivot(estimate, &iv, sel.sigma, q) {
            Ok(ci) => ci,
            Err(Error::UnboundedInterval { .. }) => {
                notes.push(format!(
                    "{}: pivot inversion did not terminate; interval reported as unbounded",
                    tr.names[j]
                ));
                unbounded_side(estimate, &iv, sel.sigma, q)
            }
            Err(e) => return Err(e),
        };
        intervals.push(iv);
        rows.push(ReportRow {
            name: tr.names[j].clone(),
            column: Some(j),
            estimate,
            p_value,
            ci_low,
            ci_high,
            truncation: Some((iv.lower, iv.upper)),
            pivot_value: Some(pivot),
        });
    }
    let diagnostics = selection::diagnostics(Some(&ev), &intervals, &sel.fit.beta, &sel.x, sel.sigma);
    Ok(SelectiveReport {
        rows,
        sigma_used: sel.sigma,
        lambda_used: sel.lambda,
        mode: ReportMode::Selective,
        diagnostics: Some(diagnostics),
        notes,
    })
}

/// When one endpoint cannot be bracketed, keep whichever side converges and
/// send the other to infinity.
fn unbounded_side(beta_hat: f64, iv: &TruncationInterval, sigma: f64, q: f64) -> (f64, f64) {
    let sd = sigma * iv.eta_norm2.sqrt();
    let (lo, hi) = endpoint_roots(beta_hat, iv, sd, q);
    (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))
}

/// Classical Wald inference on the selected model, ignoring selection.
pub fn snooping_report(tr: &TransformedRegression, sel: &Selection, q: f64) -> Result<SelectiveReport> {
    let model = sel.model();
    if model.is_empty() {
        return Ok(SelectiveReport {
            rows: Vec::new(),
            sigma_used: sel.sigma,
            lambda_used: sel.lambda,
            mode: ReportMode::Snooping,
            diagnostics: None,
            notes: vec!["lasso selected no effect modifiers; nothing to report".to_string()],
        });
    }
    let fixed = robinson::fixed_model_inference(tr, model, q, Some(sel.sigma))?;
    let mut report = SelectiveReport::from_fixed(&fixed, model, ReportMode::Snooping);
    report.lambda_used = sel.lambda;
    Ok(report)
}

pub fn selective_analysis(tr: &TransformedRegression, cfg: &AnalysisConfig) -> Result<SelectiveReport> {
    let sel = select(tr, cfg)?;
    selective_report(tr, &sel, cfg.q)
}

pub fn snooping_analysis(tr: &TransformedRegression, cfg: &AnalysisConfig) -> Result<SelectiveReport> {
    let sel = select(tr, cfg)?;
    snooping_report(tr, &sel, cfg.q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn iv(lower: f64, upper: f64, eta_norm2: f64) -> TruncationInterval {
        TruncationInterval {
            lower,
            upper,
            eta_norm2,
            value: 0.0,
        }
    }

    #[test]
    fn untruncated_median() {
        let f = truncated_normal_cdf(0.0, 0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert_relative_eq!(f, 0.5, epsilon = 1e-16);
    }

    #[test]
    fn endpoints_normalize() {
        assert_eq!(truncated_normal_cdf(-1.0, 0.3, 2.0, -1.0, 4.0).unwrap(), 0.0);
        assert_eq!(truncated_normal_cdf(4.0, 0.3, 2.0, -1.0, 4.0).unwrap(), 1.0);
    }

    #[test]
    fn table_value() {
        let expected = (normal::cdf(1.0) - normal::cdf(0.0)) / (normal::cdf(2.0) - normal::cdf(0.0));
        let f = truncated_normal_cdf(1.0, 0.0, 1.0, 0.0, 2.0).unwrap();
        assert_relative_eq!(f, expected, epsilon = 1e-15);
        // 30-digit value; the commonly quoted 0.71525 is a loose rounding
        assert_relative_eq!(f, 0.715_232_772_010_906_1, epsilon = 1e-15);
    }

    #[test]
    fn inverted_bounds_rejected() {
        assert!(truncated_normal_cdf(0.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(truncated_normal_cdf(0.0, 0.0, 0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn symmetric_interval_midpoint_has_unit_pvalue() {
        let (pivot, p) = selective_pvalue(0.0, &iv(-1.5, 1.5, 0.7), 1.3).unwrap();
        assert_relative_eq!(pivot, 0.5, epsilon = 1e-15);
        assert_relative_eq!(p, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn untruncated_pvalue_is_z_test() {
        let (sigma, eta2, b) = (0.8, 0.25, 0.9);
        let (_, p) = selective_pvalue(b, &iv(f64::NEG_INFINITY, f64::INFINITY, eta2), sigma).unwrap();
        let z = b / (sigma * eta2.sqrt());
        assert_relative_eq!(p, 2.0 * normal::sf(z), max_relative = 1e-13);
    }

    #[test]
    fn untruncated_interval_is_wald() {
        let (sigma, eta2, b, q) = (0.5, 0.04, 0.3, 0.05);
        let (lo, hi) = invert_pivot(b, &iv(f64::NEG_INFINITY, f64::INFINITY, eta2), sigma, q).unwrap();
        let half = normal::two_sided_critical(q) * sigma * eta2.sqrt();
        assert_relative_eq!(lo, b - half, epsilon = 1e-9);
        assert_relative_eq!(hi, b + half, epsilon = 1e-9);
    }

    #[test]
    fn level_near_one_collapses() {
        let t = iv(-0.5, 3.0, 1.0);
        let (lo, hi) = invert_pivot(1.0, &t, 1.0, 0.999_999).unwrap();
        assert!(hi - lo < 1e-4);
        let (lo5, hi5) = invert_pivot(1.0, &t, 1.0, 0.5).unwrap();
        assert!(lo5 < lo && hi < hi5);
    }

    #[test]
    fn far_tails_are_finite() {
        for &(a, b) in &[(38.0, 40.0), (-40.0, -38.0), (39.0, f64::INFINITY), (f64::NEG_INFINITY, -39.5)] {
            let mut last = 0.0;
            for k in 0..=100 {
                let lo = if a.is_finite() { a } else { b - 3.0 };
                let hi = if b.is_finite() { b } else { a + 3.0 };
                let z = lo + (hi - lo) * k as f64 / 100.0;
                let f = standard_truncated_cdf(z, a, b);
                assert!(f.is_finite() && (0.0..=1.0).contains(&f));
                assert!(f >= last);
                last = f;
            }
        }
    }
}
