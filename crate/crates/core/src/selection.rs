//! The lasso selection event as a polytope `{y : A₁y ≤ b₁}` and the
//! truncation interval it induces along a contrast direction η.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::lasso::LassoFit;
use crate::linalg;
use crate::{Error, Result};

/// Feasibility slack allowed at the observed response, relative to its scale.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Rows with `|(Aη)_k|` below this times `‖A‖·‖η‖` are ignored.
pub const NULL_ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SelectionEvent {
    pub model: Vec<usize>,
    pub signs: Vec<f64>,
    /// `−diag(s)·X_M†`, one row per selected column.
    pub a1: DMatrix<f64>,
    /// `−(λ/2)·diag(s)·(X_MᵀX_M)⁻¹s`.
    pub b1: DVector<f64>,
    pub lambda: f64,
    /// `X_M† = (X_MᵀX_M)⁻¹X_Mᵀ`; row k is the contrast ηₖᵀ.
    pub pinv: DMatrix<f64>,
    pub gram_inverse: DMatrix<f64>,
    /// `min(b₁ − A₁y)` at the observed response.
    pub margin: f64,
}

impl SelectionEvent {
    pub fn size(&self) -> usize {
        self.model.len()
    }

    /// Contrast vector of the `k`-th selected coefficient.
    pub fn eta(&self, k: usize) -> DVector<f64> {
        self.pinv.row(k).transpose()
    }
}

/// `(A₁, b₁, X_M†, (X_MᵀX_M)⁻¹)`.
pub type ConstraintMatrices = (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>);

/// Constraints for given selected columns and signs, without checking that
/// any response satisfies them.
pub fn constraint_matrices(xm: &DMatrix<f64>, signs: &[f64], lambda: f64) -> Result<ConstraintMatrices> {
    let gram_inverse = linalg::gram_inverse(xm)?;
    let pinv = &gram_inverse * xm.transpose();
    let s = DVector::from_column_slice(signs);
    let mut a1 = pinv.clone();
    for (k, mut row) in a1.row_iter_mut().enumerate() {
        row *= -s[k];
    }
    let gs = &gram_inverse * &s;
    let b1 = DVector::from_fn(s.len(), |k, _| -0.5 * lambda * s[k] * gs[k]);
    Ok((a1, b1, pinv, gram_inverse))
}

/// Builds the event from a lasso fit on the residualized design `x`.
///
/// `y` may be the residualized or the raw response: every row of `X_M†` is
/// orthogonal to the partialled-out column.
pub fn build_event(fit: &LassoFit, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<SelectionEvent> {
    if fit.active.is_empty() {
        return Err(Error::invalid("selection event is undefined for an empty model"));
    }
    if fit.lambda <= 0.0 {
        return Err(Error::ZeroLambda);
    }
    let xm = x.select_columns(&fit.active);
    let (a1, b1, pinv, gram_inverse) = constraint_matrices(&xm, &fit.signs, fit.lambda)?;
    let slack = &b1 - &a1 * y;
    let margin = slack.min();
    let scale = (&a1 * y).amax().max(b1.amax()).max(f64::MIN_POSITIVE);
    if margin < -FEASIBILITY_TOL * scale {
        return Err(Error::InfeasibleEvent { margin });
    }
    Ok(SelectionEvent {
        model: fit.active.clone(),
        signs: fit.signs.clone(),
        a1,
        b1,
        lambda: fit.lambda,
        pinv,
        gram_inverse,
        margin,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationInterval {
    pub lower: f64,
    pub upper: f64,
    /// ηᵀη
    pub eta_norm2: f64,
    /// ηᵀy at the observed response.
    pub value: f64,
}

impl TruncationInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn is_untruncated(&self) -> bool {
        self.lower == f64::NEG_INFINITY && self.upper == f64::INFINITY
    }
}

/// Range of `ηᵀy'` over the line `y' = y + t·η/‖η‖²` inside `{Ay' ≤ b}`.
///
/// Along that line the k-th constraint reads `v' (Aη)_k/‖η‖² ≤ b_k − (Ay)_k + v (Aη)_k/‖η‖²`
/// with `v = ηᵀy`, which gives
///
/// ```text
/// L = v + ‖η‖² · max_{(Aη)_k < 0} (b − Ay)_k / (Aη)_k
/// U = v + ‖η‖² · min_{(Aη)_k > 0} (b − Ay)_k / (Aη)_k
/// ```
pub fn polyhedral_interval(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    y: &DVector<f64>,
    eta: &DVector<f64>,
) -> Result<TruncationInterval> {
    let eta_norm2 = eta.norm_squared();
    if !(eta_norm2 > 0.0) {
        return Err(Error::Numerical("contrast vector is zero".into()));
    }
    let v = eta.dot(y);
    let a_eta = a * eta;
    let slack = b - a * y;
    let cutoff = NULL_ROW_TOL * a.norm() * eta_norm2.sqrt();
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for k in 0..a_eta.len() {
        let d = a_eta[k];
        if d.abs() <= cutoff {
            continue;
        }
        let ratio = slack[k] / d;
        if d < 0.0 {
            lo = lo.max(ratio);
        } else {
            hi = hi.min(ratio);
        }
    }
    let lower = if lo.is_finite() { v + eta_norm2 * lo } else { lo };
    let upper = if hi.is_finite() { v + eta_norm2 * hi } else { hi };
    let tol = FEASIBILITY_TOL * v.abs().max(eta_norm2.sqrt()).max(1.0);
    if lower > upper + tol {
        return Err(Error::InvertedInterval { lower, upper });
    }
    // tiny infeasibility inside tolerance: keep the observed value inside
    let (lower, upper) = (lower.min(v), upper.max(v));
    Ok(TruncationInterval {
        lower,
        upper,
        eta_norm2,
        value: v,
    })
}

/// Truncation interval for the `k`-th selected coefficient (position in the model).
pub fn truncation_interval(ev: &SelectionEvent, y: &DVector<f64>, k: usize) -> Result<TruncationInterval> {
    if k >= ev.size() {
        return Err(Error::invalid(format!("coordinate {k} is not in the selected model")));
    }
    polyhedral_interval(&ev.a1, &ev.b1, y, &ev.eta(k))
}

/// Empirical checks of the assumptions behind the asymptotic pivot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub model_size: usize,
    /// Smallest `(U − L)/(σ‖η‖)` over selected coordinates.
    pub interval_ratio: Option<f64>,
    /// Smallest `|β̂_k|·√n` over selected coordinates (lasso estimates).
    pub min_active_coef_scaled: Option<f64>,
    /// Smallest eigenvalue of `X_MᵀX_M / n`.
    pub min_eigenvalue: Option<f64>,
    pub warnings: Vec<String>,
}

/// Threshold below which `(U − L)/(σ‖η‖)` triggers a warning.
pub const INTERVAL_RATIO_WARN: f64 = 0.1;
/// Threshold on the smallest eigenvalue relative to the mean diagonal of `X_MᵀX_M / n`.
pub const EIGEN_WARN: f64 = 1e-3;

pub fn diagnostics(
    ev: Option<&SelectionEvent>,
    intervals: &[TruncationInterval],
    lasso_beta: &DVector<f64>,
    x: &DMatrix<f64>,
    sigma: f64,
) -> Diagnostics {
    let n = x.nrows();
    let Some(ev) = ev else {
        return Diagnostics {
            model_size: 0,
            interval_ratio: None,
            min_active_coef_scaled: None,
            min_eigenvalue: None,
            warnings: Vec::new(),
        };
    };
    let mut warnings = Vec::new();
    let ratio = intervals
        .iter()
        .map(|iv| {
            if iv.is_untruncated() || !iv.width().is_finite() {
                f64::INFINITY
            } else {
                iv.width() / (sigma * iv.eta_norm2.sqrt())
            }
        })
        .fold(f64::INFINITY, f64::min);
    if ratio < INTERVAL_RATIO_WARN {
        warnings.push(format!(
            "truncation interval is narrow relative to the noise ((U-L)/(sigma*|eta|) = {ratio:.3e})"
        ));
    }
    let min_coef = ev
        .model
        .iter()
        .map(|&j| lasso_beta[j].abs() * (n as f64).sqrt())
        .fold(f64::INFINITY, f64::min);
    let xm = x.select_columns(&ev.model);
    let gram = xm.transpose() * &xm / n as f64;
    let min_eig = linalg::min_eigenvalue(&gram);
    let mean_diag = gram.trace() / gram.nrows() as f64;
    if min_eig < EIGEN_WARN * mean_diag {
        warnings.push(format!(
            "selected columns are nearly collinear (smallest eigenvalue {min_eig:.3e})"
        ));
    }
    Diagnostics {
        model_size: ev.size(),
        interval_ratio: Some(ratio),
        min_active_coef_scaled: Some(min_coef),
        min_eigenvalue: Some(min_eig),
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lasso::solve_lasso;
    use crate::rng;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn fit_with(active: Vec<usize>, signs: Vec<f64>, beta: DVector<f64>, lambda: f64) -> LassoFit {
        LassoFit {
            beta,
            alpha: 0.0,
            active,
            signs,
            lambda,
            kkt_residual: 0.0,
            sweeps: 0,
        }
    }

    #[test]
    fn two_row_unit_column_by_hand() {
        let s2 = 0.5f64.sqrt();
        let x = DMatrix::from_column_slice(2, 1, &[s2, s2]);
        let y = DVector::from_vec(vec![3.0, 2.0]);
        // β = xᵀy − λ/2 for a unit column
        let beta = x.column(0).dot(&y) - 0.5;
        let fit = fit_with(vec![0], vec![1.0], DVector::from_element(1, beta), 1.0);
        let ev = build_event(&fit, &x, &y).unwrap();
        // X† = xᵀ for a unit column, so A₁ = −xᵀ and b₁ = −λ/2
        assert_relative_eq!(ev.a1[(0, 0)], -s2, epsilon = 1e-15);
        assert_relative_eq!(ev.a1[(0, 1)], -s2, epsilon = 1e-15);
        assert_relative_eq!(ev.b1[0], -0.5, epsilon = 1e-15);
        assert_relative_eq!(ev.margin, beta, epsilon = 1e-12);
    }

    #[test]
    fn flipping_signs_negates_a1_rows() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 0.0, 1.0, 0.5, 0.3]);
        let signs = [1.0, -1.0];
        let (a, b, _, _) = constraint_matrices(&x, &signs, 0.5).unwrap();
        let (fa, fb, _, _) = constraint_matrices(&x, &[-1.0, 1.0], 0.5).unwrap();
        assert_eq!(fa, -a);
        // b₁ is quadratic in s, so it does not change
        assert_eq!(fb, b);
    }

    #[test]
    fn single_row_boundary_geometry() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        let b = DVector::from_element(1, 2.0);
        let y = DVector::from_vec(vec![0.3, -0.4]);
        let eta = DVector::from_vec(vec![0.8, 0.6]);
        let iv = polyhedral_interval(&a, &b, &y, &eta).unwrap();
        assert_eq!(iv.lower, f64::NEG_INFINITY);
        let on_boundary = &y + &eta * ((iv.upper - iv.value) / iv.eta_norm2);
        assert_relative_eq!((&a * on_boundary)[0], b[0], epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_rows_leave_interval_unbounded() {
        let a = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, -2.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let y = DVector::from_vec(vec![5.0, 0.0, 0.0]);
        let eta = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let iv = polyhedral_interval(&a, &b, &y, &eta).unwrap();
        assert!(iv.is_untruncated());
    }

    #[test]
    fn observed_response_satisfies_event() {
        let mut r = rng::stream(21, 0);
        for _ in 0..50 {
            let x = DMatrix::from_fn(30, 6, |_, _| r.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(30, |i, _| x[(i, 0)] * 1.5 + r.sample::<f64, _>(StandardNormal));
            let u = DVector::from_element(30, 1.0);
            let fit = solve_lasso(&x, Some(&u), &y, 8.0).unwrap();
            if fit.is_empty() {
                continue;
            }
            let (xp, _) = linalg::partial_out(&u, &x, &y);
            let ev = build_event(&fit, &xp, &y).unwrap();
            assert!(ev.margin >= -1e-8);
            // the slack equals s∘β
            let slack = &ev.b1 - &ev.a1 * &y;
            for (k, &j) in fit.active.iter().enumerate() {
                assert_relative_eq!(slack[k], fit.signs[k] * fit.beta[j], epsilon = 1e-8);
            }
            for k in 0..ev.size() {
                let iv = truncation_interval(&ev, &y, k).unwrap();
                assert!(iv.lower <= iv.value && iv.value <= iv.upper);
            }
        }
    }

    #[test]
    fn empty_model_diagnostics() {
        let x = DMatrix::from_element(3, 1, 1.0);
        let d = diagnostics(None, &[], &DVector::zeros(1), &x, 1.0);
        assert_eq!(d.model_size, 0);
        assert!(d.interval_ratio.is_none() && d.min_eigenvalue.is_none());
    }

    #[test]
    fn near_collinear_columns_warn() {
        // two unit columns with cosine 0.9999
        let c = 0.9999f64;
        let n = 4;
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let v = &e1 * c + &e2 * (1.0 - c * c).sqrt();
        let mut x = DMatrix::zeros(n, 2);
        x.set_column(0, &e1);
        x.set_column(1, &v);
        let ev = SelectionEvent {
            model: vec![0, 1],
            signs: vec![1.0, 1.0],
            a1: DMatrix::zeros(2, n),
            b1: DVector::zeros(2),
            lambda: 1.0,
            pinv: DMatrix::zeros(2, n),
            gram_inverse: DMatrix::identity(2, 2),
            margin: 0.0,
        };
        let d = diagnostics(Some(&ev), &[], &DVector::from_vec(vec![1.0, 1.0]), &x, 1.0);
        // eigenvalues of [[1, c], [c, 1]] / n are (1 ± c)/n
        assert_relative_eq!(d.min_eigenvalue.unwrap(), (1.0 - c) / n as f64, max_relative = 1e-6);
        assert!(d.warnings.iter().any(|w| w.contains("collinear")));
    }

    #[test]
    fn untruncated_ratio_is_infinite() {
        let x = DMatrix::from_element(3, 1, 1.0);
        let ev = SelectionEvent {
            model: vec![0],
            signs: vec![1.0],
            a1: DMatrix::zeros(1, 3),
            b1: DVector::zeros(1),
            lambda: 1.0,
            pinv: DMatrix::zeros(1, 3),
            gram_inverse: DMatrix::identity(1, 1),
            margin: 0.0,
        };
        let iv = TruncationInterval {
            lower: f64::NEG_INFINITY,
            upper: 2.0,
            eta_norm2: 1.0,
            value: 0.0,
        };
        let d = diagnostics(Some(&ev), &[iv], &DVector::from_element(1, 1.0), &x, 1.0);
        assert_eq!(d.interval_ratio, Some(f64::INFINITY));
    }
}
