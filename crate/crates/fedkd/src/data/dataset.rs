//! Datasets and index partitions.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A labelled dataset: features `[N × p]`, one integer label per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() != labels.len() {
            return Err(Error::ShapeMismatch {
                context: "Dataset::new",
                left: features.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        if labels.is_empty() {
            return Err(Error::InvalidConfig("dataset must be non-empty".into()));
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: num_classes,
                    index: i,
                });
            }
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    /// Copy the given rows into a `[len × p]` batch tensor.
    pub fn gather_features(&self, indices: &[usize]) -> Tensor {
        let p = self.feature_dim();
        let mut out = Tensor::zeros(&[indices.len(), p]);
        for (r, &idx) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.features.row(idx));
        }
        out
    }

    pub fn gather_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Materialize a subset as its own dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.gather_features(indices),
            self.gather_labels(indices),
            self.num_classes,
        )
    }

    /// Indices of each class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }
}

/// Per-client index lists into a parent dataset. Lists are pairwise
/// disjoint and every index is used at most once.
#[derive(Debug, Clone)]
pub struct Partition {
    client_indices: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(client_indices: Vec<Vec<usize>>, parent_len: usize) -> Result<Self> {
        let mut seen = vec![false; parent_len];
        for list in &client_indices {
            for &idx in list {
                if idx >= parent_len {
                    return Err(Error::InvalidConfig(format!(
                        "partition index {idx} out of range {parent_len}"
                    )));
                }
                if seen[idx] {
                    return Err(Error::InvalidConfig(format!(
                        "partition index {idx} assigned twice"
                    )));
                }
                seen[idx] = true;
            }
        }
        Ok(Partition { client_indices })
    }

    pub fn num_clients(&self) -> usize {
        self.client_indices.len()
    }

    pub fn client(&self, k: usize) -> &[usize] {
        &self.client_indices[k]
    }

    pub fn clients(&self) -> &[Vec<usize>] {
        &self.client_indices
    }

    pub fn total_assigned(&self) -> usize {
        self.client_indices.iter().map(Vec::len).sum()
    }
}
