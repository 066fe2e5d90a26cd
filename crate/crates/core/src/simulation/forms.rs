//! The four five-variate test functions and their sparse compositions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Lin,
    Qua,
    #[serde(alias = "FS")]
    Fs,
    #[serde(alias = "FGS")]
    Fgs,
}

impl Form {
    pub const ALL: [Form; 4] = [Form::Lin, Form::Qua, Form::Fs, Form::Fgs];

    pub fn label(&self) -> &'static str {
        match self {
            Form::Lin => "lin",
            Form::Qua => "qua",
            Form::Fs => "FS",
            Form::Fgs => "FGS",
        }
    }

    /// Evaluates the form at the first five entries of `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
        match self {
            Form::Lin => 3.0 * x1 + x2 + x3 + x4 + x5 - 3.5,
            Form::Qua => {
                3.0 * (x1 - 0.5).powi(2) + (x2 - 0.5).powi(2) + (x3 - 0.5).powi(2) + (x4 - 0.5).powi(2) + (x5 - 0.5).powi(2)
                    + 3.0 * x1
                    + x2
                    + x3
                    + x4
                    + x5
                    - 4.0
            }
            Form::Fs => {
                (0.1 * (4.0 * x1).exp() + 4.0 / (1.0 + (-20.0 * (x2 - 0.5)).exp()) + 3.0 * x3 + 2.0 * x4 + x5 - 6.3) / 2.5
            }
            Form::Fgs => (10.0 * (PI * x1 * x2).sin() + 20.0 * (x3 - 0.5).powi(2) + 10.0 * x4 + 5.0 * x5 - 14.3) / 4.9,
        }
    }
}

pub const SPARSITY_LEVELS: [usize; 3] = [0, 5, 25];

/// `0` for sparsity 0, the form on `x₁..x₅` for sparsity 5, and
/// `Σₖ f(x_{5k−4..5k}) / k²` over five blocks for sparsity 25.
pub fn compose_sparse(form: Form, sparsity: usize, x: &[f64]) -> Result<f64> {
    if !SPARSITY_LEVELS.contains(&sparsity) {
        return Err(Error::invalid(format!("sparsity must be 0, 5 or 25, got {sparsity}")));
    }
    if x.len() < sparsity {
        return Err(Error::invalid(format!("sparsity {sparsity} needs at least {sparsity} covariates, got {}", x.len())));
    }
    Ok(match sparsity {
        0 => 0.0,
        5 => form.eval(&x[..5]),
        _ => (0..5)
            .map(|k| form.eval(&x[5 * k..5 * k + 5]) / ((k + 1) * (k + 1)) as f64)
            .sum(),
    })
}
