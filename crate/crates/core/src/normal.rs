//! Standard normal distribution functions with full tail accuracy.
//!
//! `erf`/`erfc` come from `libm` (the fdlibm rational approximations, accurate
//! to about one ulp). For |z| above [`TAIL_SWITCH`] the upper tail is evaluated
//! in log space as `log φ(z) + log R(z)`, where `R` is the Mills ratio computed
//! from its continued fraction
//!
//! ```text
//! R(z) = 1 / (z + 1 / (z + 2 / (z + 3 / (z + ...))))
//! ```
//!
//! so that `log_sf` stays finite far beyond the point where `erfc` underflows.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Above this standardized value the log tail uses the Mills-ratio continued fraction.
pub const TAIL_SWITCH: f64 = 8.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const CF_TERMS: usize = 60;

pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Φ(z).
pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// 1 − Φ(z), without cancellation for large z.
pub fn sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// Mills ratio `(1 − Φ(z)) / φ(z)` for z ≥ [`TAIL_SWITCH`] by backward
/// evaluation of the continued fraction.
fn mills_ratio_cf(z: f64) -> f64 {
    let mut t = z;
    for k in (1..=CF_TERMS).rev() {
        t = z + k as f64 / t;
    }
    1.0 / t
}

/// log(1 − Φ(z)).
pub fn log_sf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if z > TAIL_SWITCH {
        -0.5 * z * z - LN_SQRT_2PI + mills_ratio_cf(z).ln()
    } else if z < -1.0 {
        // 1 − Φ(z) = 1 − Φ(−z) is close to one; keep the small part exact.
        (-lower_tail(z)).ln_1p()
    } else {
        sf(z).ln()
    }
}

/// Φ(z) for z < −1 via the upper tail of −z.
fn lower_tail(z: f64) -> f64 {
    log_sf(-z).exp()
}

/// log Φ(z).
pub fn log_cdf(z: f64) -> f64 {
    log_sf(-z)
}

/// Φ⁻¹(p) for p in (0, 1); ±∞ at the endpoints.
///
/// Bisection on the cdf to locate the root, then Newton steps in the tail-stable
/// parameterization. Only used for a handful of critical values per analysis.
pub fn quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -quantile(1.0 - p);
    }
    // p ≤ 0.5: root of log Φ(z) = log p, z ≤ 0.
    let target = p.ln();
    let (mut lo, mut hi) = (-40.0_f64, 0.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if log_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..3 {
        // d/dz log Φ(z) = φ(z)/Φ(z)
        let lc = log_cdf(z);
        let slope = (-0.5 * z * z - LN_SQRT_2PI - lc).exp();
        let step = (lc - target) / slope;
        if !step.is_finite() {
            break;
        }
        z -= step;
    }
    z
}

/// Two-sided critical value z_{1−q/2}.
pub fn two_sided_critical(q: f64) -> f64 {
    -quantile(0.5 * q)
}
