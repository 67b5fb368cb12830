//! Label-wise logit statistics shared by the FedDistill variants.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Running per-class mean of logit vectors. Internally stores sums and
/// counts so merges are exact count-weighted means regardless of order.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitStats {
    sums: Tensor,
    counts: Vec<u64>,
}

impl LogitStats {
    pub fn new(num_classes: usize) -> Self {
        LogitStats {
            sums: Tensor::zeros(&[num_classes, num_classes]),
            counts: vec![0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sums(&self) -> &Tensor {
        &self.sums
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Fold a batch of logits into the running means.
    pub fn update(&mut self, logits: &Tensor, labels: &[usize]) -> Result<()> {
        let c = self.num_classes();
        if logits.cols() != c || logits.rows() != labels.len() {
            return Err(Error::ShapeMismatch {
                context: "LogitStats::update",
                left: logits.shape().to_vec(),
                right: vec![labels.len(), c],
            });
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: c,
                    index: i,
                });
            }
            let row = logits.row(i).to_vec();
            for (s, v) in self.sums.row_mut(y).iter_mut().zip(row) {
                *s += v;
            }
            self.counts[y] += 1;
        }
        Ok(())
    }

    /// Count-weighted merge; commutative in the inputs.
    pub fn merge(&mut self, other: &LogitStats) -> Result<()> {
        if other.num_classes() != self.num_classes() {
            return Err(Error::ShapeMismatch {
                context: "LogitStats::merge",
                left: vec![self.num_classes()],
                right: vec![other.num_classes()],
            });
        }
        self.sums.add_scaled(&other.sums, 1.0)?;
        for (a, &b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Mean logit vector for a class, if any samples were seen.
    pub fn mean_for_class(&self, class: usize) -> Option<Vec<f64>> {
        let n = self.counts[class];
        if n == 0 {
            return None;
        }
        Some(
            self.sums
                .row(class)
                .iter()
                .map(|&s| s / n as f64)
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_mean_is_the_sample() {
        let mut stats = LogitStats::new(2);
        let logits = Tensor::from_rows(&[vec![3.0, -1.0]]).unwrap();
        stats.update(&logits, &[1]).unwrap();
        assert_eq!(stats.mean_for_class(1).unwrap(), vec![3.0, -1.0]);
        assert!(stats.mean_for_class(0).is_none());
    }

    #[test]
    fn equal_count_merge_averages() {
        let mut a = LogitStats::new(2);
        a.update(&Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap(), &[0])
            .unwrap();
        let mut b = LogitStats::new(2);
        b.update(&Tensor::from_rows(&[vec![3.0, 2.0]]).unwrap(), &[0])
            .unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a.mean_for_class(0).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn merge_is_count_weighted_and_order_independent() {
        let mut a = LogitStats::new(2);
        for _ in 0..3 {
            a.update(&Tensor::from_rows(&[vec![2.0, 2.0]]).unwrap(), &[0])
                .unwrap();
        }
        let mut b = LogitStats::new(2);
        b.update(&Tensor::from_rows(&[vec![6.0, 6.0]]).unwrap(), &[0])
            .unwrap();

        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        assert_eq!(ab, ba);
        // (3·2 + 1·6) / 4 = 3
        assert_eq!(ab.mean_for_class(0).unwrap(), vec![3.0, 3.0]);
    }
}
