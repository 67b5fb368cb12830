//! Non-iid partitioning via symmetric Dirichlet draws, plus stratified
//! subsampling helpers.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::data::dataset::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, stream};

/// Split `total` items into `weights.len()` integer shares proportional to
/// `weights`, using largest-remainder rounding. Conserves the total exactly;
/// ties break toward lower indices.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        // Degenerate weights: fall back to an even split.
        return apportion(total, &vec![1.0; weights.len()]);
    }
    let quotas: Vec<f64> = weights.iter().map(|&w| w / sum * total as f64).collect();
    let mut shares: Vec<usize> = quotas.iter().map(|&q| q.floor() as usize).collect();
    let assigned: usize = shares.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        shares[i] += 1;
    }
    shares
}

/// Draw proportions from a symmetric Dirichlet(α·1_K) via normalized Gamma
/// samples.
fn dirichlet_proportions<R: Rng>(k: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.iter().map(|&d| d / sum).collect()
    } else {
        vec![1.0 / k as f64; k]
    }
}

/// Partition a dataset across `k` clients: for every class, Dirichlet(α)
/// proportions decide how that class's samples split among clients.
///
/// Every sample is assigned exactly once. A client may legally end up with
/// zero samples of individual classes, but if a client receives zero samples
/// overall the draw is retried (up to 10 times) before erroring.
pub fn dirichlet_partition(dataset: &Dataset, k: usize, alpha: f64, seed: u64) -> Result<Partition> {
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one client".into()));
    }
    if alpha <= 0.0 {
        return Err(Error::InvalidConfig(format!("alpha must be > 0, got {alpha}")));
    }
    let by_class = dataset.class_indices();
    let mut rng = derive_rng(seed, &[stream::DIRICHLET, k as u64]);
    const MAX_ATTEMPTS: usize = 10;
    for _ in 0..MAX_ATTEMPTS {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); k];
        for class in &by_class {
            if class.is_empty() {
                continue;
            }
            let proportions = dirichlet_proportions(k, alpha, &mut rng);
            let shares = apportion(class.len(), &proportions);
            let mut cursor = 0;
            for (client, &share) in shares.iter().enumerate() {
                lists[client].extend_from_slice(&class[cursor..cursor + share]);
                cursor += share;
            }
        }
        if lists.iter().all(|l| !l.is_empty()) {
            for list in &mut lists {
                list.sort_unstable();
            }
            return Partition::new(lists, dataset.len());
        }
    }
    Err(Error::PartitionExhausted {
        attempts: MAX_ATTEMPTS,
    })
}

/// Class-stratified subsample of about `fraction` of the dataset, by index.
/// `salt` separates independent subsampling passes under one seed.
pub fn stratified_subsample(dataset: &Dataset, fraction: f64, seed: u64, salt: u64) -> Vec<usize> {
    let mut rng = derive_rng(seed, &[stream::SUBSAMPLE, salt]);
    let mut keep = Vec::new();
    for mut class in dataset.class_indices() {
        class.shuffle(&mut rng);
        let take = (class.len() as f64 * fraction).round() as usize;
        keep.extend_from_slice(&class[..take.min(class.len())]);
    }
    keep.sort_unstable();
    keep
}

/// Mean total-variation distance between client label marginals and the
/// global label marginal. Diagnostic for partition heterogeneity.
pub fn mean_tv_distance(dataset: &Dataset, partition: &Partition) -> f64 {
    let c = dataset.num_classes();
    let global = histogram(dataset.labels(), c);
    let mut total = 0.0;
    for client in partition.clients() {
        let labels: Vec<usize> = client.iter().map(|&i| dataset.labels()[i]).collect();
        let local = histogram(&labels, c);
        let tv: f64 = local
            .iter()
            .zip(&global)
            .map(|(&a, &b)| (a - b).abs())
            .sum::<f64>()
            / 2.0;
        total += tv;
    }
    total / partition.num_clients() as f64
}

fn histogram(labels: &[usize], num_classes: usize) -> Vec<f64> {
    let mut h = vec![0.0; num_classes];
    for &y in labels {
        h[y] += 1.0;
    }
    let n = labels.len().max(1) as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}
