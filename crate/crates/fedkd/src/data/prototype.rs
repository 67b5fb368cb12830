//! The 2-D three-cluster prototype task.
//!
//! Three isotropic Gaussians in the plane, one per class, with each client
//! holding a heavily class-skewed slice of the pooled training data. The
//! geometry is chosen so that locally-trained clients learn visibly biased
//! decision boundaries while a pooled oracle is near-perfect.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, Partition};
use crate::data::partition::apportion;
use crate::error::Result;
use crate::numerics::Tensor;
use crate::rng::{derive_rng, stream};

pub const PROTOTYPE_CLASSES: usize = 3;

/// Geometry and skew knobs. Defaults: cluster means at 90°/210°/330° on a
/// circle of radius 3, σ = 0.9, and client k holding 90% of class k plus 5%
/// of each other class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrototypeConfig {
    pub samples_per_cluster: usize,
    pub radius: f64,
    pub sigma: f64,
    /// Fraction of a class's samples that go to its "home" client.
    pub main_fraction: f64,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        PrototypeConfig {
            samples_per_cluster: 500,
            radius: 3.0,
            sigma: 0.9,
            main_fraction: 0.9,
        }
    }
}

/// A generated prototype task: the pooled training data, its three-way
/// client partition, and an iid test set from the same mixture.
#[derive(Debug, Clone)]
pub struct PrototypeTask {
    pub train: Dataset,
    pub partition: Partition,
    pub test: Dataset,
}

impl PrototypeTask {
    pub fn client_dataset(&self, k: usize) -> Result<Dataset> {
        self.train.subset(self.partition.client(k))
    }
}

fn cluster_means(radius: f64) -> [[f64; 2]; PROTOTYPE_CLASSES] {
    let angles = [90.0_f64, 210.0, 330.0];
    let mut means = [[0.0; 2]; PROTOTYPE_CLASSES];
    for (m, a) in means.iter_mut().zip(angles) {
        let rad = a.to_radians();
        m[0] = radius * rad.cos();
        m[1] = radius * rad.sin();
    }
    means
}

fn sample_point<R: Rng>(mean: &[f64; 2], sigma: f64, rng: &mut R) -> [f64; 2] {
    let n1: f64 = rng.sample(StandardNormal);
    let n2: f64 = rng.sample(StandardNormal);
    [mean[0] + sigma * n1, mean[1] + sigma * n2]
}

/// Build the prototype task with default geometry.
pub fn make_prototype(seed: u64, samples_per_cluster: usize) -> Result<PrototypeTask> {
    make_prototype_with(
        &PrototypeConfig {
            samples_per_cluster,
            ..PrototypeConfig::default()
        },
        seed,
    )
}

/// Build the prototype task with explicit geometry.
pub fn make_prototype_with(config: &PrototypeConfig, seed: u64) -> Result<PrototypeTask> {
    let mut rng = derive_rng(seed, &[stream::PROTOTYPE]);
    let means = cluster_means(config.radius);
    let spc = config.samples_per_cluster;

    // Training pool: spc points per class, grouped by class.
    let mut features = Vec::with_capacity(PROTOTYPE_CLASSES * spc * 2);
    let mut labels = Vec::with_capacity(PROTOTYPE_CLASSES * spc);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..spc {
            let point = sample_point(mean, config.sigma, &mut rng);
            features.extend_from_slice(&point);
            labels.push(class);
        }
    }
    let train = Dataset::new(
        Tensor::from_vec(&[PROTOTYPE_CLASSES * spc, 2], features)?,
        labels,
        PROTOTYPE_CLASSES,
    )?;

    // Client skew: class c sends main_fraction of its samples to client c
    // and splits the remainder evenly between the other two clients.
    let side = (1.0 - config.main_fraction) / 2.0;
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); PROTOTYPE_CLASSES];
    for class in 0..PROTOTYPE_CLASSES {
        let mut quotas = [side; PROTOTYPE_CLASSES];
        quotas[class] = config.main_fraction;
        let shares = apportion(spc, &quotas);
        let base = class * spc;
        let mut cursor = 0;
        for (client, &share) in shares.iter().enumerate() {
            lists[client].extend((base + cursor)..(base + cursor + share));
            cursor += share;
        }
    }
    for list in &mut lists {
        list.sort_unstable();
    }
    let partition = Partition::new(lists, train.len())?;

    // Test set: iid from the equal-weight mixture.
    let test_n = PROTOTYPE_CLASSES * spc;
    let mut test_features = Vec::with_capacity(test_n * 2);
    let mut test_labels = Vec::with_capacity(test_n);
    for _ in 0..test_n {
        let class = rng.gen_range(0..PROTOTYPE_CLASSES);
        let point = sample_point(&means[class], config.sigma, &mut rng);
        test_features.extend_from_slice(&point);
        test_labels.push(class);
    }
    let test = Dataset::new(
        Tensor::from_vec(&[test_n, 2], test_features)?,
        test_labels,
        PROTOTYPE_CLASSES,
    )?;

    Ok(PrototypeTask {
        train,
        partition,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_labels() {
        let task = make_prototype(1, 50).unwrap();
        assert_eq!(task.train.feature_dim(), 2);
        assert_eq!(task.test.feature_dim(), 2);
        assert!(task.train.labels().iter().all(|&y| y < 3));
        assert!(task.test.labels().iter().all(|&y| y < 3));
        for k in 0..3 {
            let client = task.client_dataset(k).unwrap();
            assert_eq!(client.feature_dim(), 2);
        }
    }

    #[test]
    fn clients_cover_pool_disjointly() {
        let task = make_prototype(7, 40).unwrap();
        assert_eq!(task.partition.total_assigned(), task.train.len());
        let mut seen = vec![false; task.train.len()];
        for client in task.partition.clients() {
            for &i in client {
                assert!(!seen[i], "index {i} assigned twice");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn skew_gives_each_client_a_dominant_class() {
        let task = make_prototype(3, 100).unwrap();
        for k in 0..3 {
            let client = task.client_dataset(k).unwrap();
            let counter = crate::data::labels::count_labels(client.labels(), 3).unwrap();
            assert_eq!(counter.counts()[k], 90);
            let others: u64 = counter.total() - counter.counts()[k];
            assert_eq!(others, 10);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = make_prototype(11, 30).unwrap();
        let b = make_prototype(11, 30).unwrap();
        assert!(a.train.features().bit_eq(b.train.features()));
        assert_eq!(a.test.labels(), b.test.labels());
    }
}
