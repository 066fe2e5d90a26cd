//! Replication studies and their error metrics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::generate::{generate_dataset, SimConfig, SimNuisance, Truth};
use crate::dataset::{Dataset, DesignSpec};
use crate::nuisance::{self, CrossFitMode, ForestParams, LassoCvParams, Learner};
use crate::pivot::{self, AnalysisConfig, LambdaChoice};
use crate::report::SelectiveReport;
use crate::rng;
use crate::robinson::{self, InterceptMode};
use crate::Result;

/// Coverage bookkeeping for one report against its targets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub selected: usize,
    pub significant: usize,
    pub miscovered: usize,
    pub false_signs: usize,
}

impl Score {
    /// Share of selected coefficients whose interval misses the target, with
    /// the `max(|M|, 1)` denominator.
    pub fn false_coverage_proportion(&self) -> f64 {
        self.miscovered as f64 / self.selected.max(1) as f64
    }

    pub fn false_sign_proportion(&self) -> f64 {
        self.false_signs as f64 / self.selected.max(1) as f64
    }
}

/// Targets this close to zero (relative to the largest one) are round-off
/// from an exact projection and have no sign.
const NULL_TARGET_TOL: f64 = 1e-9;

fn null_threshold(targets: &DVector<f64>) -> f64 {
    NULL_TARGET_TOL * targets.amax().max(1.0)
}

/// Scores report rows against the targets of the selected coordinates (same order).
pub fn score_report(report: &SelectiveReport, targets: &DVector<f64>) -> Score {
    let mut s = Score {
        selected: report.rows.len(),
        ..Default::default()
    };
    let zero = null_threshold(targets);
    for (row, &target) in report.rows.iter().zip(targets.iter()) {
        let excludes_zero = row.ci_low > 0.0 || row.ci_high < 0.0;
        if excludes_zero {
            s.significant += 1;
            if target.abs() > zero && target * row.ci_low < 0.0 {
                s.false_signs += 1;
            }
        }
        if !(row.ci_low <= target && target <= row.ci_high) {
            s.miscovered += 1;
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: u64,
    pub selective: Score,
    pub snooping: Score,
    pub model: Vec<usize>,
    pub bias_mu_t: f64,
    pub ate_covered: bool,
    /// Reported pivots (evaluated at 0) of coordinates whose target is zero.
    pub null_pivots: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub failures: Vec<String>,
    pub mean_model_size: f64,
    pub mean_num_significant: f64,
    pub fcr: f64,
    /// Pooled miscoverage over every selected coefficient.
    pub stie: f64,
    pub fsr: f64,
    pub snooping_fcr: f64,
    pub snooping_stie: f64,
    pub bias_mu_t: f64,
    /// Share of replications whose ATE interval misses the sample ATE.
    pub ate_coverage_error: f64,
    pub records: Vec<RepRecord>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Combines replication records; independent of their order.
pub fn aggregate(mut records: Vec<RepRecord>, failures: Vec<String>) -> SimMetrics {
    records.sort_by_key(|r| r.rep);
    let pooled = |f: fn(&RepRecord) -> &Score| {
        let (miss, sel) = records
            .iter()
            .fold((0, 0), |(m, s), r| (m + f(r).miscovered, s + f(r).selected));
        if sel == 0 {
            0.0
        } else {
            miss as f64 / sel as f64
        }
    };
    SimMetrics {
        reps_ok: records.len(),
        reps_failed: failures.len(),
        failures,
        mean_model_size: mean(records.iter().map(|r| r.selective.selected as f64)),
        mean_num_significant: mean(records.iter().map(|r| r.selective.significant as f64)),
        fcr: mean(records.iter().map(|r| r.selective.false_coverage_proportion())),
        stie: pooled(|r| &r.selective),
        fsr: mean(records.iter().map(|r| r.selective.false_sign_proportion())),
        snooping_fcr: mean(records.iter().map(|r| r.snooping.false_coverage_proportion())),
        snooping_stie: pooled(|r| &r.snooping),
        bias_mu_t: mean(records.iter().map(|r| r.bias_mu_t)),
        ate_coverage_error: mean(records.iter().map(|r| if r.ate_covered { 0.0 } else { 1.0 })),
        records,
    }
}

fn learner_for(cfg: &SimConfig, truth: &Truth, rep: u64) -> Learner {
    let seed = rng::child_seed(cfg.seed, 0x1000 + rep);
    match cfg.nuisance {
        SimNuisance::RandomForest {
            n_trees,
            min_node_size,
            out_of_bag,
        } => Learner::RandomForest(ForestParams {
            n_trees,
            min_node_size,
            mtry: None,
            bootstrap: true,
            out_of_bag,
            seed,
        }),
        SimNuisance::LassoCv { k_folds, grid_size } => Learner::LassoCv(LassoCvParams {
            k_folds,
            grid_size,
            seed,
        }),
        SimNuisance::Oracle => Learner::Oracle {
            mu_t: truth.mu_t.clone(),
            mu_y: truth.mu_y.clone(),
        },
        SimNuisance::Zero => Learner::Zero,
    }
}

/// One replication: nuisances, transformation, selection, both reports, scoring.
pub fn run_replication(cfg: &SimConfig, rep: u64) -> Result<RepRecord> {
    let (d, truth) = generate_dataset(cfg, rep)?;
    let learner = learner_for(cfg, &truth, rep);
    let mode = if cfg.cross_fit {
        CrossFitMode::TwoFold {
            seed: rng::child_seed(cfg.seed, 0x2000 + rep),
        }
    } else {
        CrossFitMode::None
    };
    let nf = nuisance::cross_fit(&d, &learner, mode)?;
    let tr = robinson::transform(&d, &nf, &DesignSpec::all(d.p()), InterceptMode::TreatmentColumn)?;
    let analysis = AnalysisConfig {
        q: cfg.q,
        sigma: None,
        lambda: LambdaChoice::Rule(cfg.lambda_rule),
        seed: rng::child_seed(cfg.seed, 0x3000 + rep),
        ..Default::default()
    };
    let sel = pivot::select(&tr, &analysis)?;
    let selective = pivot::selective_report(&tr, &sel, cfg.q)?;
    let snooping = pivot::snooping_report(&tr, &sel, cfg.q)?;
    let targets = targets_for(&d, &truth, sel.model())?;
    let ate = robinson::estimate_ate(&tr, cfg.q)?;
    let sate = truth.delta.mean();
    Ok(RepRecord {
        rep,
        selective: score_report(&selective, &targets),
        snooping: score_report(&snooping, &targets),
        model: sel.model().to_vec(),
        bias_mu_t: nuisance::mean_bias(&nf.mu_t_hat, &truth.mu_t),
        ate_covered: ate.ci_low <= sate && sate <= ate.ci_high,
        null_pivots: null_pivots(&selective, &targets),
    })
}

fn targets_for(d: &Dataset, truth: &Truth, model: &[usize]) -> Result<DVector<f64>> {
    if model.is_empty() {
        return Ok(DVector::zeros(0));
    }
    Ok(robinson::target_beta_star(&truth.delta, &d.t, &truth.mu_t, &d.x, model)?.1)
}

/// Pivots of rows whose target vanishes (up to round-off relative to the
/// largest target).
pub fn null_pivots(report: &SelectiveReport, targets: &DVector<f64>) -> Vec<f64> {
    let zero = null_threshold(targets);
    report
        .rows
        .iter()
        .zip(targets.iter())
        .filter(|(_, t)| t.abs() <= zero)
        .filter_map(|(r, _)| r.pivot_value)
        .collect()
}

/// Runs `cfg.reps` replications. Failed replications are counted and excluded.
pub fn run_study(cfg: &SimConfig) -> Result<SimMetrics> {
    cfg.validate()?;
    let run = |rep: u64| (rep, run_replication(cfg, rep));

    #[cfg(feature = "parallel")]
    let results: Vec<(u64, Result<RepRecord>)> = {
        use rayon::prelude::*;
        (0..cfg.reps as u64).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<(u64, Result<RepRecord>)> = (0..cfg.reps as u64).map(run).collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(format!("rep {rep}: {e}")),
        }
    }
    Ok(aggregate(records, failures))
}
