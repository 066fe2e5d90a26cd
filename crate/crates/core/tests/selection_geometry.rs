//! Geometry of the selection polytope and its truncation intervals.

use effsel::lasso::{LassoFit, PenalizedProblem, SolverConfig};
use effsel::rng;
use effsel::selection::{self, SelectionEvent};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Instance {
    problem: PenalizedProblem,
    fit: LassoFit,
}

fn random_instance(r: &mut impl Rng, with_u: bool) -> Instance {
    let n = r.random_range(20..80);
    let p = r.random_range(1..12);
    let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(r));
    let signal: DVector<f64> = x.column(0) * 1.5;
    let y = signal + DVector::from_fn(n, |_, _| StandardNormal.sample(r));
    let u = DVector::from_element(n, 1.0);
    let problem = PenalizedProblem::new(&x, with_u.then_some(&u), &y).unwrap();
    let lambda = problem.lambda_max() * r.random_range(0.05..0.9);
    let fit = problem.solve(lambda, None, &SolverConfig::default()).unwrap();
    Instance { problem, fit }
}

fn event(inst: &Instance) -> SelectionEvent {
    selection::build_event(&inst.fit, &inst.problem.x, &inst.problem.y).unwrap()
}

fn max_violation(ev: &SelectionEvent, y: &DVector<f64>) -> f64 {
    (&ev.a1 * y - &ev.b1).max()
}

#[test]
fn observed_response_is_feasible_and_inside() {
    let mut r = rng::stream(301, 0);
    let mut solved = 0;
    while solved < 1000 {
        let inst = random_instance(&mut r, solved % 2 == 0);
        if inst.fit.is_empty() {
            continue;
        }
        let ev = event(&inst);
        let y = &inst.problem.y;
        let scale = 1e-8 * (1.0 + ev.b1.amax());
        assert!(max_violation(&ev, y) <= scale, "violation {}", max_violation(&ev, y));
        for k in 0..ev.size() {
            let iv = selection::truncation_interval(&ev, y, k).unwrap();
            let v = ev.eta(k).dot(y);
            assert!(iv.lower <= v && v <= iv.upper, "{} ∉ [{}, {}]", v, iv.lower, iv.upper);
        }
        solved += 1;
    }
}

#[test]
fn moving_along_eta_stays_inside_exactly_on_the_interval() {
    let mut r = rng::stream(302, 0);
    let mut checked = 0;
    while checked < 200 {
        let inst = random_instance(&mut r, true);
        if inst.fit.is_empty() {
            continue;
        }
        let ev = event(&inst);
        let y = &inst.problem.y;
        let k = r.random_range(0..ev.size());
        let eta = ev.eta(k);
        let iv = selection::truncation_interval(&ev, y, k).unwrap();
        let along = |t: f64| y + &eta * ((t - iv.value) / iv.eta_norm2);
        let tol = 1e-8 * (1.0 + ev.b1.amax() + y.amax());
        // random points of the interval (capped where it is unbounded)
        let lo = iv.lower.max(iv.value - 50.0);
        let hi = iv.upper.min(iv.value + 50.0);
        for _ in 0..20 {
            let t = if hi > lo { r.random_range(lo..=hi) } else { lo };
            assert!(max_violation(&ev, &along(t)) <= tol);
        }
        // just past a finite endpoint some constraint breaks
        let step = 1e-4 * (1.0 + iv.width().min(1e6));
        if iv.upper.is_finite() {
            assert!(max_violation(&ev, &along(iv.upper + step)) > 0.0);
        }
        if iv.lower.is_finite() {
            assert!(max_violation(&ev, &along(iv.lower - step)) > 0.0);
        }
        checked += 1;
    }
}

#[test]
fn appended_null_rows_leave_interval_unchanged() {
    let mut r = rng::stream(303, 0);
    let mut checked = 0;
    while checked < 200 {
        let inst = random_instance(&mut r, checked % 2 == 1);
        if inst.fit.is_empty() {
            continue;
        }
        let ev = event(&inst);
        let y = &inst.problem.y;
        let n = y.len();
        let xm = inst.problem.x.select_columns(&ev.model);
        // random directions projected off the column space of X_M
        let extra = 5;
        let mut rows = DMatrix::zeros(extra, n);
        for i in 0..extra {
            let g = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
            let proj = &xm * (&ev.gram_inverse * (xm.transpose() * &g));
            rows.set_row(i, &(g - proj).transpose());
        }
        let mut a = DMatrix::zeros(ev.size() + extra, n);
        a.rows_mut(0, ev.size()).copy_from(&ev.a1);
        a.rows_mut(ev.size(), extra).copy_from(&rows);
        let mut b = DVector::zeros(ev.size() + extra);
        b.rows_mut(0, ev.size()).copy_from(&ev.b1);
        let ry = &rows * y;
        for i in 0..extra {
            b[ev.size() + i] = ry[i] + r.random_range(0.0..3.0);
        }
        for k in 0..ev.size() {
            let base = selection::truncation_interval(&ev, y, k).unwrap();
            let with_null = selection::polyhedral_interval(&a, &b, y, &ev.eta(k)).unwrap();
            for (p, q) in [(base.lower, with_null.lower), (base.upper, with_null.upper)] {
                assert!(p == q || (p - q).abs() <= 1e-12 * (1.0 + p.abs()), "{p} vs {q}");
            }
        }
        checked += 1;
    }
}

/// Whether the one-column lasso at this response selects the column with sign `s`.
fn selects_with_sign(problem: &PenalizedProblem, y: &DVector<f64>, lambda: f64, s: f64) -> bool {
    let p = PenalizedProblem::new(&problem.x, None, y).unwrap();
    let fit = p.solve(lambda, None, &SolverConfig::default()).unwrap();
    fit.beta[0] * s > 0.0
}

/// Endpoint of the selection region along `t ↦ y(t)`, by bracketing then bisection
/// on the solver's own output.
fn line_search(inside: impl Fn(f64) -> bool, start: f64, dir: f64, scale: f64) -> f64 {
    let mut step = scale;
    let mut near = start;
    let mut far = start + dir * step;
    while inside(far) {
        if step > 1e8 * scale {
            return dir * f64::INFINITY;
        }
        near = far;
        step *= 2.0;
        far = start + dir * step;
    }
    for _ in 0..200 {
        let mid = 0.5 * (near + far);
        if inside(mid) {
            near = mid;
        } else {
            far = mid;
        }
    }
    0.5 * (near + far)
}

#[test]
fn one_dimensional_line_search_oracle() {
    let mut r = rng::stream(304, 0);
    let mut checked = 0;
    while checked < 100 {
        let n = r.random_range(10..60);
        let x = DMatrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut r));
        let beta = r.random_range(-2.0..2.0);
        let y: DVector<f64> = x.column(0) * beta + DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
        let u = DVector::from_element(n, 1.0);
        let problem = PenalizedProblem::new(&x, (checked % 2 == 0).then_some(&u), &y).unwrap();
        let lambda = problem.lambda_max() * r.random_range(0.1..0.95);
        let fit = problem.solve(lambda, None, &SolverConfig::default()).unwrap();
        if fit.is_empty() {
            continue;
        }
        let s = fit.signs[0];
        let ev = selection::build_event(&fit, &problem.x, &problem.y).unwrap();
        let iv = selection::truncation_interval(&ev, &problem.y, 0).unwrap();
        let eta = ev.eta(0);
        let along = |t: f64| &problem.y + &eta * ((t - iv.value) / iv.eta_norm2);
        let inside = |t: f64| selects_with_sign(&problem, &along(t), lambda, s);
        let scale = iv.eta_norm2.sqrt();
        let lo = line_search(inside, iv.value, -1.0, scale);
        let hi = line_search(inside, iv.value, 1.0, scale);
        for (found, formula) in [(lo, iv.lower), (hi, iv.upper)] {
            if formula.is_infinite() {
                assert_eq!(found, formula);
            } else {
                assert!((found - formula).abs() <= 1e-5, "line search {found} vs interval {formula}");
            }
        }
        checked += 1;
    }
}
