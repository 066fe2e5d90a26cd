//! Simulation designs, replication studies and the perturbation experiment.

pub mod forms;
pub mod generate;
pub mod perturb;
pub mod study;

pub use forms::{compose_sparse, Form};
pub use generate::{generate_dataset, Noise, SimConfig, SimNuisance, Truth};
pub use perturb::{perturbation_experiment, perturbation_table, PerturbConfig, PerturbRow};
pub use study::{run_replication, run_study, RepRecord, Score, SimMetrics};
