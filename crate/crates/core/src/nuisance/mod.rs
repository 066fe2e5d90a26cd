//! Nuisance regressions `μ_t(x) = E[T | X = x]` and `μ_y(x) = E[Y | X = x]`.

pub mod forest;
pub mod lasso_cv;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::rng;
use crate::{Error, Result};

pub use forest::{fit_random_forest, Forest, ForestFit, ForestParams};
pub use lasso_cv::{fit_lasso_cv, LassoCvFit, LassoCvParams, LinearPredictor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceMethod {
    RandomForest,
    LassoCv,
    Oracle,
    Zero,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossFitMode {
    None,
    TwoFold { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuisanceFit {
    #[serde(skip)]
    pub mu_t_hat: DVector<f64>,
    #[serde(skip)]
    pub mu_y_hat: DVector<f64>,
    pub method: NuisanceMethod,
    pub cross_fit: CrossFitMode,
    pub warnings: Vec<String>,
}

impl NuisanceFit {
    pub fn zero(n: usize) -> Self {
        NuisanceFit {
            mu_t_hat: DVector::zeros(n),
            mu_y_hat: DVector::zeros(n),
            method: NuisanceMethod::Zero,
            cross_fit: CrossFitMode::None,
            warnings: Vec::new(),
        }
    }
}

/// A way of estimating both nuisance functions.
#[derive(Debug, Clone)]
pub enum Learner {
    RandomForest(ForestParams),
    LassoCv(LassoCvParams),
    /// Known nuisance values at every row.
    Oracle { mu_t: DVector<f64>, mu_y: DVector<f64> },
    Zero,
    /// Sample mean of the training targets.
    Mean,
}

impl Learner {
    pub fn method(&self) -> NuisanceMethod {
        match self {
            Learner::RandomForest(_) => NuisanceMethod::RandomForest,
            Learner::LassoCv(_) => NuisanceMethod::LassoCv,
            Learner::Oracle { .. } => NuisanceMethod::Oracle,
            Learner::Zero => NuisanceMethod::Zero,
            Learner::Mean => NuisanceMethod::Mean,
        }
    }

    /// Fits on `(x_train, target)` and predicts at `x_eval`, or at the
    /// training rows themselves when `x_eval` is `None`. `which` distinguishes
    /// the two nuisance targets in derived seeds.
    fn fit_predict(
        &self,
        x_train: &DMatrix<f64>,
        target: &DVector<f64>,
        x_eval: Option<&DMatrix<f64>>,
        which: u64,
        warnings: &mut Vec<String>,
    ) -> Result<DVector<f64>> {
        match self {
            Learner::RandomForest(params) => {
                let params = ForestParams {
                    seed: rng::child_seed(params.seed, which),
                    ..*params
                };
                let fit = fit_random_forest(x_train, target, &params)?;
                warnings.extend(fit.warnings);
                match x_eval {
                    Some(x) => Ok(fit.forest.predict(x)),
                    None if params.out_of_bag => {
                        let in_sample = fit.forest.predict(x_train);
                        let mut oob = fit.oob_predictions;
                        let missing = oob.iter().filter(|v| v.is_nan()).count();
                        if missing > 0 {
                            warnings.push(format!("{missing} rows were in every bootstrap sample; using in-sample predictions there"));
                            for (o, s) in oob.iter_mut().zip(in_sample.iter()) {
                                if o.is_nan() {
                                    *o = *s;
                                }
                            }
                        }
                        Ok(oob)
                    }
                    None => Ok(fit.forest.predict(x_train)),
                }
            }
            Learner::LassoCv(params) => {
                let params = LassoCvParams {
                    seed: rng::child_seed(params.seed, which),
                    ..*params
                };
                Ok(fit_lasso_cv(x_train, target, &params)?.predictor.predict(x_eval.unwrap_or(x_train)))
            }
            Learner::Zero => Ok(DVector::zeros(x_eval.unwrap_or(x_train).nrows())),
            Learner::Mean => Ok(DVector::from_element(x_eval.unwrap_or(x_train).nrows(), target.mean())),
            Learner::Oracle { .. } => unreachable!("oracle values are passed through"),
        }
    }
}

/// Estimates `μ̂_t` and `μ̂_y` at every row.
///
/// With [`CrossFitMode::TwoFold`] the rows are split at random into halves and
/// each row's values come from the model trained on the other half.
pub fn cross_fit(d: &Dataset, learner: &Learner, mode: CrossFitMode) -> Result<NuisanceFit> {
    let n = d.n();
    let mut warnings = Vec::new();
    if let Learner::Oracle { mu_t, mu_y } = learner {
        if mu_t.len() != n || mu_y.len() != n {
            return Err(Error::invalid("oracle nuisance values do not match the dataset"));
        }
        return Ok(NuisanceFit {
            mu_t_hat: mu_t.clone(),
            mu_y_hat: mu_y.clone(),
            method: NuisanceMethod::Oracle,
            cross_fit: mode,
            warnings,
        });
    }
    let (mu_t_hat, mu_y_hat) = match mode {
        CrossFitMode::None => (
            learner.fit_predict(&d.x, &d.t, None, 1, &mut warnings)?,
            learner.fit_predict(&d.x, &d.y, None, 2, &mut warnings)?,
        ),
        CrossFitMode::TwoFold { seed } => {
            if n < 4 {
                return Err(Error::invalid("two-fold cross-fitting needs at least 4 rows"));
            }
            let (a, b) = two_fold_split(n, seed);
            let mut mt = DVector::zeros(n);
            let mut my = DVector::zeros(n);
            for (fold, (eval, train)) in [(&a, &b), (&b, &a)].into_iter().enumerate() {
                let xt = d.x.select_rows(train.iter());
                let xe = d.x.select_rows(eval.iter());
                let tag = 10 * (fold as u64 + 1);
                let pt = learner.fit_predict(&xt, &d.t.select_rows(train.iter()), Some(&xe), tag + 1, &mut warnings)?;
                let py = learner.fit_predict(&xt, &d.y.select_rows(train.iter()), Some(&xe), tag + 2, &mut warnings)?;
                for (k, &i) in eval.iter().enumerate() {
                    mt[i] = pt[k];
                    my[i] = py[k];
                }
            }
            (mt, my)
        }
    };
    if mu_t_hat.iter().chain(mu_y_hat.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("nuisance predictions are not finite".into()));
    }
    Ok(NuisanceFit {
        mu_t_hat,
        mu_y_hat,
        method: learner.method(),
        cross_fit: mode,
        warnings,
    })
}

/// Seeded random partition into two halves (sizes ⌈n/2⌉ and ⌊n/2⌋), each sorted.
pub fn two_fold_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 0));
    let half = n.div_ceil(2);
    let mut a = order[..half].to_vec();
    let mut b = order[half..].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// Signed mean error of the fitted propensity against the truth.
pub fn mean_bias(estimate: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    (estimate - truth).mean()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        Dataset::new(
            DMatrix::from_column_slice(4, 1, &[0.1, 0.4, 0.7, 0.9]),
            DVector::from_vec(vec![1.0, 0.0, 1.0, 1.0]),
            DVector::from_vec(vec![2.0, 4.0, 8.0, 16.0]),
            vec!["x".into()],
        )
        .unwrap()
    }

    #[test]
    fn oracle_passthrough() {
        let d = small();
        let mu_t = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let mu_y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let nf = cross_fit(&d, &Learner::Oracle { mu_t: mu_t.clone(), mu_y: mu_y.clone() }, CrossFitMode::None).unwrap();
        assert_eq!(nf.mu_t_hat, mu_t);
        assert_eq!(nf.mu_y_hat, mu_y);
    }

    #[test]
    fn zero_learner() {
        let nf = cross_fit(&small(), &Learner::Zero, CrossFitMode::None).unwrap();
        assert!(nf.mu_t_hat.iter().chain(nf.mu_y_hat.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn two_fold_mean_learner_uses_other_half() {
        let d = small();
        let (a, b) = two_fold_split(4, 5);
        assert_eq!(a.len(), 2);
        assert_eq!(b.len(), 2);
        let nf = cross_fit(&d, &Learner::Mean, CrossFitMode::TwoFold { seed: 5 }).unwrap();
        let mean = |idx: &[usize]| idx.iter().map(|&i| d.y[i]).sum::<f64>() / idx.len() as f64;
        for &i in &a {
            assert_eq!(nf.mu_y_hat[i], mean(&b));
        }
        for &i in &b {
            assert_eq!(nf.mu_y_hat[i], mean(&a));
        }
    }

    #[test]
    fn two_fold_needs_four_rows() {
        let d = Dataset::new(
            DMatrix::from_element(3, 1, 1.0),
            DVector::from_element(3, 1.0),
            DVector::from_element(3, 1.0),
            vec!["x".into()],
        )
        .unwrap();
        assert!(cross_fit(&d, &Learner::Mean, CrossFitMode::TwoFold { seed: 1 }).is_err());
    }
}
