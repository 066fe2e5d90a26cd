//! Perturbed linear-model experiment: how fast may nuisance error vanish
//! before selective coverage breaks down.
//!
//! Rows are `X ~ N(0, I_p)`, `Y = Xβ + ε`; the analysis sees
//! `X·(1 + n^{−γ}D₁)` and `Y + n^{−γ}D₂` while coverage is scored against the
//! projection of the unperturbed `Xβ`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::study::{score_report, Score};
use crate::dataset::{Dataset, DesignSpec};
use crate::lasso::LambdaRule;
use crate::nuisance::NuisanceFit;
use crate::pivot::{self, AnalysisConfig, LambdaChoice};
use crate::rng;
use crate::robinson::{self, InterceptMode};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub gammas: Vec<f64>,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub q: f64,
    /// Noise scale given to the analysis; estimated from the data when absent.
    pub sigma: Option<f64>,
    pub beta: Vec<f64>,
    pub lambda_rule: LambdaRule,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        let mut beta = vec![0.0; 30];
        beta[..3].fill(1.0);
        PerturbConfig {
            gammas: vec![0.15, 0.2, 0.25, 0.3, 0.35],
            ns: vec![500, 2000, 8000],
            reps: 100,
            seed: 1,
            q: 0.10,
            sigma: Some(1.0),
            beta,
            lambda_rule: LambdaRule {
                multiplier: 2.0,
                draws: 200,
                kkt_scale: false,
            },
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::invalid("every gamma must be positive"));
        }
        if self.ns.iter().any(|&n| n <= self.beta.len() + 1) {
            return Err(Error::invalid(format!("every n must exceed p + 1 = {}", self.beta.len() + 1)));
        }
        if self.reps == 0 || self.beta.is_empty() {
            return Err(Error::invalid("reps and the coefficient vector must be nonempty"));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::invalid(format!("q must lie in (0, 1), got {}", self.q)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbRow {
    pub gamma: f64,
    pub n: usize,
    pub fcp_selective: f64,
    pub fcp_naive: f64,
    pub mean_model_size: f64,
    pub reps_failed: usize,
}

/// Scores of one replication, `(selective, naive)`.
pub fn perturb_replication(cfg: &PerturbConfig, gamma: f64, n: usize, rep: u64) -> Result<(Score, Score)> {
    let p = cfg.beta.len();
    let beta = DVector::from_column_slice(&cfg.beta);
    // One stream per replication shared by every (γ, n): the rows of a
    // smaller n are the first rows of a larger one, so differences between
    // settings are not swamped by independent Monte Carlo noise.
    let mut r = rng::stream(cfg.seed, rep);
    let scale = (n as f64).powf(-gamma);
    let mut x = DMatrix::zeros(n, p);
    let mut x_seen = DMatrix::zeros(n, p);
    let mut y_seen = DVector::zeros(n);
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = StandardNormal.sample(&mut r);
        }
        let e: f64 = StandardNormal.sample(&mut r);
        let d1: f64 = StandardNormal.sample(&mut r);
        let d2: f64 = StandardNormal.sample(&mut r);
        let xb = x.row(i).transpose().dot(&beta);
        for j in 0..p {
            x_seen[(i, j)] = x[(i, j)] * (1.0 + scale * d1);
        }
        y_seen[i] = xb + e + scale * d2;
    }
    let names = (1..=p).map(|j| format!("X{j}")).collect();
    let ones = DVector::from_element(n, 1.0);
    let d = Dataset::new(x_seen, ones.clone(), y_seen, names)?;
    let tr = robinson::transform(&d, &NuisanceFit::zero(n), &DesignSpec::all(p), InterceptMode::TreatmentColumn)?;
    let analysis = AnalysisConfig {
        q: cfg.q,
        sigma: cfg.sigma,
        lambda: LambdaChoice::Rule(cfg.lambda_rule),
        seed: rng::child_seed(cfg.seed, 0x4000 + rep),
        ..Default::default()
    };
    let sel = pivot::select(&tr, &analysis)?;
    let model = sel.model().to_vec();
    if model.is_empty() {
        return Ok((Score::default(), Score::default()));
    }
    let selective = pivot::selective_report(&tr, &sel, cfg.q)?;
    let naive = pivot::snooping_report(&tr, &sel, cfg.q)?;
    let delta = &x * &beta;
    let (_, target) = robinson::target_beta_star(&delta, &ones, &DVector::zeros(n), &x, &model)?;
    Ok((score_report(&selective, &target), score_report(&naive, &target)))
}

/// Mean false coverage proportions over `cfg.reps` replications at one `(γ, n)`.
pub fn perturbation_experiment(cfg: &PerturbConfig, gamma: f64, n: usize) -> Result<PerturbRow> {
    cfg.validate()?;
    let run = |rep: u64| perturb_replication(cfg, gamma, n, rep);

    #[cfg(feature = "parallel")]
    let results: Vec<Result<(Score, Score)>> = {
        use rayon::prelude::*;
        (0..cfg.reps as u64).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(Score, Score)>> = (0..cfg.reps as u64).map(run).collect();

    let ok: Vec<(Score, Score)> = results.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let m = ok.len().max(1) as f64;
    Ok(PerturbRow {
        gamma,
        n,
        fcp_selective: ok.iter().map(|(s, _)| s.false_coverage_proportion()).sum::<f64>() / m,
        fcp_naive: ok.iter().map(|(_, s)| s.false_coverage_proportion()).sum::<f64>() / m,
        mean_model_size: ok.iter().map(|(s, _)| s.selected as f64).sum::<f64>() / m,
        reps_failed: results.len() - ok.len(),
    })
}

/// One row per `(γ, n)`, γ-major.
pub fn perturbation_table(cfg: &PerturbConfig) -> Result<Vec<PerturbRow>> {
    let mut rows = Vec::with_capacity(cfg.gammas.len() * cfg.ns.len());
    for &g in &cfg.gammas {
        for &n in &cfg.ns {
            rows.push(perturbation_experiment(cfg, g, n)?);
        }
    }
    Ok(rows)
}
