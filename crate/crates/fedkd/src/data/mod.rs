//! Data plumbing: datasets, IDX parsing, non-iid partitioning, the 2-D
//! prototype task, and label statistics.

pub mod dataset;
pub mod idx;
pub mod labels;
pub mod partition;
pub mod prototype;

pub use dataset::{Dataset, Partition};
pub use idx::{load_idx, write_idx};
pub use labels::{aggregate_prior, count_labels, LabelCounter, LabelPrior};
pub use partition::{apportion, dirichlet_partition, mean_tv_distance, stratified_subsample};
pub use prototype::{make_prototype, make_prototype_with, PrototypeConfig, PrototypeTask};
