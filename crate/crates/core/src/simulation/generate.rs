//! Simulation settings and the data generator.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::forms::{compose_sparse, Form, SPARSITY_LEVELS};
use crate::dataset::Dataset;
use crate::lasso::LambdaRule;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    Normal,
    /// Laplace noise scaled to unit variance before multiplying by σ.
    #[serde(alias = "exp")]
    DoubleExp,
}

impl Noise {
    pub fn label(&self) -> &'static str {
        match self {
            Noise::Normal => "normal",
            Noise::DoubleExp => "exp",
        }
    }

    /// One draw with unit variance.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Noise::Normal => StandardNormal.sample(rng),
            Noise::DoubleExp => {
                // inverse CDF of Laplace(0, 1/√2)
                let u: f64 = rng.random::<f64>() - 0.5;
                -std::f64::consts::FRAC_1_SQRT_2 * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }
}

/// How a simulation estimates the nuisance functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimNuisance {
    RandomForest {
        n_trees: usize,
        min_node_size: usize,
        #[serde(default = "yes")]
        out_of_bag: bool,
    },
    LassoCv { k_folds: usize, grid_size: usize },
    Oracle,
    Zero,
}

fn yes() -> bool {
    true
}

impl Default for SimNuisance {
    fn default() -> Self {
        SimNuisance::RandomForest {
            n_trees: 500,
            min_node_size: 20,
            out_of_bag: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub s_t: usize,
    pub f_t: Form,
    pub s_y: usize,
    pub f_y: Form,
    pub s_delta: usize,
    pub f_delta: Form,
    pub sigma: f64,
    pub noise: Noise,
    pub n: usize,
    pub p: usize,
    /// Independent uniform covariates appended after the first `p`
    /// (475 gives the high-dimensional setting).
    pub extra_covariates: usize,
    pub reps: usize,
    pub seed: u64,
    pub nuisance: SimNuisance,
    pub cross_fit: bool,
    pub q: f64,
    pub lambda_rule: LambdaRule,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::table1_row1()
    }
}

impl SimConfig {
    /// First row of the low-dimensional linear table: a randomized experiment
    /// with linear μ_y and Δ, σ = 0.25, Gaussian noise.
    pub fn table1_row1() -> Self {
        SimConfig {
            s_t: 0,
            f_t: Form::Lin,
            s_y: 5,
            f_y: Form::Lin,
            s_delta: 5,
            f_delta: Form::Lin,
            sigma: 0.25,
            noise: Noise::Normal,
            n: 1000,
            p: 25,
            extra_covariates: 0,
            reps: 100,
            seed: 1,
            nuisance: SimNuisance::default(),
            cross_fit: false,
            q: 0.05,
            lambda_rule: LambdaRule::default(),
        }
    }

    pub fn total_covariates(&self) -> usize {
        self.p + self.extra_covariates
    }

    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, s) in [("s_t", self.s_t), ("s_y", self.s_y), ("s_delta", self.s_delta)] {
            if !SPARSITY_LEVELS.contains(&s) {
                v.push(format!("{name} must be 0, 5 or 25 (got {s})"));
            } else if s > self.p {
                v.push(format!("{name} = {s} needs p ≥ {s} (got p = {})", self.p));
            }
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            v.push(format!("sigma must be positive (got {})", self.sigma));
        }
        if self.p == 0 {
            v.push("p must be at least 1".into());
        }
        if self.n < 4 {
            v.push(format!("n must be at least 4 (got {})", self.n));
        }
        if self.reps == 0 {
            v.push("reps must be at least 1".into());
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            v.push(format!("q must lie in (0, 1) (got {})", self.q));
        }
        if self.lambda_rule.draws == 0 || !(self.lambda_rule.multiplier > 0.0) {
            v.push("lambda_rule needs draws ≥ 1 and a positive multiplier".into());
        }
        match self.nuisance {
            SimNuisance::RandomForest { n_trees, min_node_size, .. } if n_trees == 0 || min_node_size == 0 => {
                v.push("random forest needs n_trees ≥ 1 and min_node_size ≥ 1".into())
            }
            SimNuisance::LassoCv { k_folds, grid_size } if k_folds < 2 || grid_size == 0 => {
                v.push("lasso_cv needs k_folds ≥ 2 and grid_size ≥ 1".into())
            }
            _ => {}
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid simulation config: {}", v.join("; "))))
        }
    }
}

/// True nuisance and effect values at each generated row.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub mu_t: DVector<f64>,
    pub mu_y: DVector<f64>,
    pub delta: DVector<f64>,
}

/// Draws replication `rep`: `X ~ U[0,1]^p`, `T = μ_t(X) + N(0,1)`,
/// `Y = μ_y(X) + (T − μ_t(X))·Δ(X) + σ·noise`.
pub fn generate_dataset(cfg: &SimConfig, rep: u64) -> Result<(Dataset, Truth)> {
    cfg.validate()?;
    let n = cfg.n;
    let p_all = cfg.total_covariates();
    let mut r = rng::stream(cfg.seed, rep);
    let mut x = DMatrix::zeros(n, p_all);
    let mut t = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    let mut mu_t = DVector::zeros(n);
    let mut mu_y = DVector::zeros(n);
    let mut delta = DVector::zeros(n);
    let mut row = vec![0.0; p_all];
    for i in 0..n {
        for (j, v) in row.iter_mut().enumerate() {
            *v = r.random::<f64>();
            x[(i, j)] = *v;
        }
        mu_t[i] = compose_sparse(cfg.f_t, cfg.s_t, &row)?;
        mu_y[i] = compose_sparse(cfg.f_y, cfg.s_y, &row)?;
        delta[i] = compose_sparse(cfg.f_delta, cfg.s_delta, &row)?;
        let tn: f64 = StandardNormal.sample(&mut r);
        t[i] = mu_t[i] + tn;
        let e = cfg.noise.sample(&mut r);
        y[i] = mu_y[i] + tn * delta[i] + cfg.sigma * e;
    }
    let names = (1..=p_all).map(|j| format!("X{j}")).collect();
    let d = Dataset::new(x, t, y, names)?;
    Ok((d, Truth { mu_t, mu_y, delta }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_exp_has_unit_sd() {
        let mut r = rng::stream(5, 0);
        let m = 100_000;
        let draws: Vec<f64> = (0..m).map(|_| Noise::DoubleExp.sample(&mut r)).collect();
        let mean = draws.iter().sum::<f64>() / m as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!((var.sqrt() - 1.0).abs() < 0.02, "sd {}", var.sqrt());
    }

    #[test]
    fn generator_identity_without_noise() {
        let cfg = SimConfig {
            s_t: 5,
            n: 50,
            reps: 1,
            ..SimConfig::table1_row1()
        };
        let (d, truth) = generate_dataset(&cfg, 0).unwrap();
        let mut r = rng::stream(cfg.seed, 0);
        for i in 0..cfg.n {
            for _ in 0..cfg.p {
                let _: f64 = r.random();
            }
            let tn: f64 = StandardNormal.sample(&mut r);
            let e = cfg.noise.sample(&mut r);
            assert!((d.t[i] - truth.mu_t[i] - tn).abs() < 1e-12);
            let signal = d.y[i] - cfg.sigma * e - truth.mu_y[i];
            assert!((signal - tn * truth.delta[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn randomized_design_has_constant_propensity() {
        let (_, truth) = generate_dataset(&SimConfig { n: 20, ..SimConfig::table1_row1() }, 3).unwrap();
        assert!(truth.mu_t.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn high_dimensional_mode_appends_columns() {
        let cfg = SimConfig {
            n: 10,
            extra_covariates: 475,
            ..SimConfig::table1_row1()
        };
        let (d, _) = generate_dataset(&cfg, 0).unwrap();
        assert_eq!(d.p(), 500);
    }

    #[test]
    fn violations_are_all_listed() {
        let cfg = SimConfig {
            s_t: 7,
            sigma: -1.0,
            reps: 0,
            ..SimConfig::table1_row1()
        };
        assert_eq!(cfg.violations().len(), 3);
    }
}
