//! Multi-stage, domain-adaptive, incremental n-shot learning over feature
//! vectors.
//!
//! A task lists stages (one `base`, then any number of `adapt`), each with
//! cumulative per-class seed budgets and cumulative total label budgets. The
//! engine picks a source dataset, fits a learner on it, then walks every
//! checkpoint: buy labels, train, evaluate, and append one results record.

pub mod config;
pub mod dataset;
pub mod engine;
pub mod learners;
pub mod query;
pub mod report;
pub mod results;
pub mod schedule;
pub mod selector;
pub mod stream;
pub mod synth;

pub use config::{Algorithm, AlgorithmParams, ExperimentConfig, TaskSpec};
pub use dataset::{DatasetHandle, DatasetRegistry, LabeledState, Sample};
pub use engine::{run_experiment, run_stage, RunContext};
pub use results::ResultsRecord;
