//! Selective inference for treatment effect modification.
//!
//! The pipeline residualizes outcome and treatment on the covariates
//! (Robinson's transformation) using machine-learned nuisance regressions,
//! selects a linear effect-modification submodel with the lasso, and reports
//! p-values and confidence intervals that condition on the selection event.
//!
//! Module map:
//!
//! * [`dataset`]: CSV ingestion, centering, interaction expansion.
//! * [`nuisance`]: random forest and cross-validated lasso learners, cross-fitting.
//! * [`robinson`]: the transformed regression, ATE, and the fixed-model analyses.
//! * [`lasso`]: coordinate-descent lasso, the lambda rule, noise scale.
//! * [`selection`]: affine selection events and truncation intervals.
//! * [`pivot`]: truncated-Gaussian pivot, CI inversion, selective/snooping reports.
//! * [`simulation`]: data generators, replication studies, perturbation experiment.
//!
//! ```no_run
//! use effsel::dataset::{load_csv, DesignSpec, Schema};
//! use effsel::nuisance::{cross_fit, CrossFitMode, ForestParams, Learner};
//! use effsel::pivot::{select, selective_report, AnalysisConfig};
//! use effsel::robinson::{transform, InterceptMode};
//!
//! # fn main() -> effsel::Result<()> {
//! let loaded = load_csv("survey.csv", &Schema {
//!     outcome: "log2_crp".into(),
//!     treatment: "overweight".into(),
//!     covariates: None,
//! })?;
//! let d = loaded.dataset;
//! let nf = cross_fit(&d, &Learner::RandomForest(ForestParams::default()), CrossFitMode::None)?;
//! let tr = transform(&d, &nf, &DesignSpec::all(d.p()), InterceptMode::TreatmentColumn)?;
//! let sel = select(&tr, &AnalysisConfig::default())?;
//! let report = selective_report(&tr, &sel, 0.05)?;
//! for row in &report.rows {
//!     println!("{} {:.3} [{:.3}, {:.3}] p={:.4}", row.name, row.estimate, row.ci_low, row.ci_high, row.p_value);
//! }
//! # Ok(())
//! # }
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod lasso;
pub mod linalg;
pub mod normal;
pub mod nuisance;
pub mod pivot;
pub mod report;
pub mod rng;
pub mod robinson;
pub mod selection;
pub mod simulation;

pub use error::{Error, Result};
