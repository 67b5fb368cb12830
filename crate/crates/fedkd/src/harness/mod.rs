//! Configuration, experiment orchestration, evaluation, metrics persistence,
//! and plotting.

pub mod config;
pub mod evaluate;
pub mod experiment;
pub mod matrix;
pub mod plot;
pub mod prototype_kd;
pub mod selftest;

pub use config::{DatasetConfig, ExperimentConfig, GeneratorConfig, ModelConfig, RoundParams};
pub use evaluate::{argmax_tie_low, evaluate_ensemble, evaluate_mean_over_models, evaluate_model};
pub use experiment::{
    build_experiment, evaluate_current, read_final_accuracy, run_experiment, BuiltExperiment,
    RoundRecord, RunSummary, CSV_HEADER,
};
pub use matrix::{run_matrix, MatrixCell, MatrixSummary};
pub use plot::emit_plots;
pub use prototype_kd::{
    predictor_ce_on_generator, run_prototype_kd, PrototypeKdConfig, PrototypeKdReport,
};
pub use selftest::run_selftest;
