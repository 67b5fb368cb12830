//! Model containers: the split classifier, the conditional generator, logit
//! statistics, and parameter checkpointing.

pub mod checkpoint;
pub mod classifier;
pub mod generator;
pub mod stats;

pub use checkpoint::{load_checkpoint, parse_tensors, save_checkpoint, serialize_tensors, CheckpointMeta};
pub use classifier::{average_predictors, Classifier, ClassifierArch, ClassifierGrads, ClassifierTape};
pub use generator::{diversity_loss, Generator, GeneratorArch, GeneratorGrads, GeneratorTape};
pub use stats::LogitStats;
