//! Label counters and the empirical label prior.

use rand::Rng;

use crate::error::{Error, Result};

/// Per-class sample counts for one client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelCounter {
    counts: Vec<u64>,
}

impl LabelCounter {
    pub fn new(num_classes: usize) -> Self {
        LabelCounter {
            counts: vec![0; num_classes],
        }
    }

    pub fn record(&mut self, label: usize) {
        self.counts[label] += 1;
    }

    pub fn record_batch(&mut self, labels: &[usize]) {
        for &y in labels {
            self.counts[y] += 1;
        }
    }

    pub fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn merge(&mut self, other: &LabelCounter) {
        for (a, &b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Exact class histogram of a label list.
pub fn count_labels(labels: &[usize], num_classes: usize) -> Result<LabelCounter> {
    let mut counter = LabelCounter::new(num_classes);
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: num_classes,
                index: i,
            });
        }
        counter.record(y);
    }
    Ok(counter)
}

/// Normalized label distribution; classes with zero global count get zero
/// probability.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPrior {
    probs: Vec<f64>,
}

impl LabelPrior {
    pub fn uniform(num_classes: usize) -> Self {
        LabelPrior {
            probs: vec![1.0 / num_classes as f64; num_classes],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Draw one label by inverse-CDF over the class probabilities.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen_range(0.0..1.0);
        let mut acc = 0.0;
        for (c, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return c;
            }
        }
        // Rounding can leave acc marginally below 1; fall back to the last
        // class with positive mass.
        self.probs
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.probs.len() - 1)
    }
}

/// `probs[c] = Σ_k counts_k[c] / Σ_{k,c} counts_k[c]`.
pub fn aggregate_prior(counters: &[&LabelCounter]) -> Result<LabelPrior> {
    let num_classes = counters
        .first()
        .ok_or(Error::EmptyCounters)?
        .num_classes();
    let mut totals = vec![0u64; num_classes];
    for counter in counters {
        for (t, &c) in totals.iter_mut().zip(counter.counts()) {
            *t += c;
        }
    }
    let grand: u64 = totals.iter().sum();
    if grand == 0 {
        return Err(Error::EmptyCounters);
    }
    let probs = totals
        .iter()
        .map(|&t| t as f64 / grand as f64)
        .collect();
    Ok(LabelPrior { probs })
}
