//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function returns a JSON string so the page can stay plain
//! JavaScript. The same computations are available natively through the
//! `*_json` functions, which is what the tests exercise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use effsel::dataset::{Dataset, DesignSpec};
use effsel::nuisance::NuisanceFit;
use effsel::pivot::{self, AnalysisConfig};
use effsel::report::SelectiveReport;
use effsel::robinson::{self, InterceptMode};
use effsel::rng;
use effsel::selection::TruncationInterval;
use effsel::simulation::study::score_report;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const CURVE_POINTS: usize = 241;

fn to_js(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Truncated-Gaussian pivot for one coefficient.
///
/// `lower`/`upper` may be ±∞ (pass `Infinity` from JavaScript). Returns the
/// p-value, the selective interval, the truncated density under the null and
/// the pivot as a function of the mean, for plotting.
pub fn pivot_explorer_json(estimate: f64, lower: f64, upper: f64, sd: f64, q: f64) -> Result<Value, String> {
    if !(sd > 0.0 && sd.is_finite()) {
        return Err("sd must be positive".into());
    }
    if !(lower < upper) {
        return Err("the truncation interval is empty".into());
    }
    if !(lower <= estimate && estimate <= upper) {
        return Err("the estimate must lie inside the truncation interval".into());
    }
    let iv = TruncationInterval {
        lower,
        upper,
        eta_norm2: 1.0,
        value: estimate,
    };
    let (pivot_value, p_value) = pivot::selective_pvalue(estimate, &iv, sd).map_err(|e| e.to_string())?;
    let (ci_low, ci_high) = pivot::invert_pivot(estimate, &iv, sd, q).map_err(|e| e.to_string())?;

    // null density on a window around the estimate, clipped to the interval
    let lo = lower.max(estimate - 6.0 * sd).max(-6.0 * sd);
    let hi = upper.min(estimate + 6.0 * sd).min(6.0 * sd).max(lo + sd);
    let mass = effsel::normal::cdf(upper / sd) - effsel::normal::cdf(lower / sd);
    let density: Vec<[f64; 2]> = (0..CURVE_POINTS)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
            let inside = x >= lower && x <= upper;
            let f = if inside && mass > 0.0 {
                effsel::normal::pdf(x / sd) / (sd * mass)
            } else {
                0.0
            };
            [x, f]
        })
        .collect();

    let span = |v: f64, fallback: f64| if v.is_finite() { v } else { fallback };
    let mu_lo = span(ci_low, estimate - 8.0 * sd) - 2.0 * sd;
    let mu_hi = span(ci_high, estimate + 8.0 * sd) + 2.0 * sd;
    let mut curve = Vec::with_capacity(CURVE_POINTS);
    for i in 0..CURVE_POINTS {
        let mu = mu_lo + (mu_hi - mu_lo) * i as f64 / (CURVE_POINTS - 1) as f64;
        let f = pivot::truncated_normal_cdf(estimate, mu, sd * sd, lower, upper).map_err(|e| e.to_string())?;
        curve.push([mu, f]);
    }
    let z = effsel::normal::two_sided_critical(q);
    Ok(json!({
        "pivot": pivot_value,
        "p_value": p_value,
        "ci_low": finite_or_null(ci_low),
        "ci_high": finite_or_null(ci_high),
        "naive_ci": [estimate - z * sd, estimate + z * sd],
        "naive_p_value": 2.0 * effsel::normal::sf((estimate / sd).abs()),
        "density": density,
        "pivot_curve": curve,
    }))
}

#[wasm_bindgen]
pub fn pivot_explorer(estimate: f64, lower: f64, upper: f64, sd: f64, q: f64) -> Result<String, JsValue> {
    to_js(pivot_explorer_json(estimate, lower, upper, sd, q))
}

/// Linear effect model `y = Xβ + ε` with `X ~ N(0, 1)` and the first `k`
/// coefficients set to `signal`, alternating in sign.
struct Design {
    n: usize,
    p: usize,
    k: usize,
    signal: f64,
    sigma: f64,
}

impl Design {
    fn check(&self) -> Result<(), String> {
        if self.p == 0 || self.k > self.p {
            return Err("need 1 ≤ p and k ≤ p".into());
        }
        if self.n < self.p + 2 {
            return Err("need n ≥ p + 2".into());
        }
        if !(self.sigma > 0.0) {
            return Err("σ must be positive".into());
        }
        Ok(())
    }

    fn beta(&self) -> DVector<f64> {
        DVector::from_fn(self.p, |j, _| {
            if j < self.k {
                if j % 2 == 0 {
                    self.signal
                } else {
                    -self.signal
                }
            } else {
                0.0
            }
        })
    }

    fn draw(&self, seed: u64, rep: u64) -> Result<(Dataset, DVector<f64>), String> {
        let mut r = rng::stream(seed, rep);
        let x = DMatrix::<f64>::from_fn(self.n, self.p, |_, _| StandardNormal.sample(&mut r));
        let delta = &x * self.beta();
        let noise = DVector::<f64>::from_fn(self.n, |_, _| {
            let e: f64 = StandardNormal.sample(&mut r);
            self.sigma * e
        });
        let y = &delta + noise;
        let names = (0..self.p).map(|j| format!("x{}", j + 1)).collect();
        let d = Dataset::new(x, DVector::from_element(self.n, 1.0), y, names).map_err(|e| e.to_string())?;
        Ok((d, delta))
    }
}

#[derive(Serialize)]
struct Row {
    name: String,
    target: f64,
    estimate: f64,
    selective: [Option<f64>; 2],
    naive: [Option<f64>; 2],
    selective_p: f64,
    naive_p: f64,
}

struct Analysis {
    selective: SelectiveReport,
    naive: SelectiveReport,
    targets: DVector<f64>,
    lambda: f64,
}

fn analyse(design: &Design, d: &Dataset, delta: &DVector<f64>, q: f64, seed: u64) -> Result<Option<Analysis>, String> {
    let n = design.n;
    let tr = robinson::transform(d, &NuisanceFit::zero(n), &DesignSpec::all(design.p), InterceptMode::TreatmentColumn)
        .map_err(|e| e.to_string())?;
    let cfg = AnalysisConfig {
        q,
        sigma: Some(design.sigma),
        seed,
        ..AnalysisConfig::default()
    };
    let sel = pivot::select(&tr, &cfg).map_err(|e| e.to_string())?;
    if sel.model().is_empty() {
        return Ok(None);
    }
    let model = sel.model().to_vec();
    let selective = pivot::selective_report(&tr, &sel, q).map_err(|e| e.to_string())?;
    let naive = pivot::snooping_report(&tr, &sel, q).map_err(|e| e.to_string())?;
    let (_, targets) =
        robinson::target_beta_star(delta, &d.t, &DVector::zeros(n), &d.x, &model).map_err(|e| e.to_string())?;
    Ok(Some(Analysis {
        selective,
        naive,
        targets,
        lambda: sel.lambda,
    }))
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// One simulated dataset: lasso selection, then selective and naive intervals
/// for every selected coefficient next to its projection target.
pub fn compare_json(n: usize, p: usize, k: usize, signal: f64, sigma: f64, q: f64, seed: u64) -> Result<Value, String> {
    let design = Design { n, p, k, signal, sigma };
    design.check()?;
    let (d, delta) = design.draw(seed, 0)?;
    let Some(a) = analyse(&design, &d, &delta, q, seed)? else {
        return Ok(json!({ "rows": [], "lambda": Value::Null, "truth": design.beta().as_slice() }));
    };
    let rows: Vec<Row> = a
        .selective
        .rows
        .iter()
        .zip(a.naive.rows.iter())
        .zip(a.targets.iter())
        .map(|((s, nv), &target)| Row {
            name: s.name.clone(),
            target,
            estimate: s.estimate,
            selective: [finite(s.ci_low), finite(s.ci_high)],
            naive: [finite(nv.ci_low), finite(nv.ci_high)],
            selective_p: s.p_value,
            naive_p: nv.p_value,
        })
        .collect();
    Ok(json!({ "rows": rows, "lambda": a.lambda, "truth": design.beta().as_slice() }))
}

#[wasm_bindgen]
pub fn compare(n: usize, p: usize, k: usize, signal: f64, sigma: f64, q: f64, seed: u64) -> Result<String, JsValue> {
    to_js(compare_json(n, p, k, signal, sigma, q, seed))
}

/// Repeats [`compare_json`] `reps` times and pools non-coverage of the
/// selected coefficients for both kinds of interval.
#[allow(clippy::too_many_arguments)]
pub fn coverage_json(
    n: usize,
    p: usize,
    k: usize,
    signal: f64,
    sigma: f64,
    q: f64,
    reps: usize,
    seed: u64,
) -> Result<Value, String> {
    let design = Design { n, p, k, signal, sigma };
    design.check()?;
    if reps == 0 || reps > 5000 {
        return Err("reps must lie in 1..=5000".into());
    }
    let (mut selected, mut miss_sel, mut miss_naive, mut empty) = (0usize, 0usize, 0usize, 0usize);
    for rep in 0..reps as u64 {
        let (d, delta) = design.draw(seed, rep + 1)?;
        match analyse(&design, &d, &delta, q, seed ^ rep)? {
            None => empty += 1,
            Some(a) => {
                let s = score_report(&a.selective, &a.targets);
                selected += s.selected;
                miss_sel += s.miscovered;
                miss_naive += score_report(&a.naive, &a.targets).miscovered;
            }
        }
    }
    let rate = |m: usize| if selected == 0 { 0.0 } else { m as f64 / selected as f64 };
    Ok(json!({
        "reps": reps,
        "intervals": selected,
        "empty_models": empty,
        "mean_model_size": selected as f64 / reps as f64,
        "noncoverage_selective": rate(miss_sel),
        "noncoverage_naive": rate(miss_naive),
    }))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn coverage(
    n: usize,
    p: usize,
    k: usize,
    signal: f64,
    sigma: f64,
    q: f64,
    reps: usize,
    seed: u64,
) -> Result<String, JsValue> {
    to_js(coverage_json(n, p, k, signal, sigma, q, reps, seed))
}
