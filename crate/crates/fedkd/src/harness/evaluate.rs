//! Test-set evaluation. Accuracy is the fraction of samples whose argmax
//! probability matches the label; argmax ties resolve to the lowest class
//! index. Chunks are scored in parallel and combined in fixed order, so the
//! result is independent of thread count.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::Result;
use crate::models::Classifier;
use crate::protocols::ensemble_predict;

const EVAL_CHUNK: usize = 512;

/// Lowest index among the maxima.
pub fn argmax_tie_low(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(EVAL_CHUNK))
        .map(|c| (c * EVAL_CHUNK, ((c + 1) * EVAL_CHUNK).min(n)))
        .collect()
}

/// Accuracy of a single model.
pub fn evaluate_model(model: &Classifier, test: &Dataset) -> Result<f64> {
    evaluate_with(test, |indices| {
        let x = test.gather_features(indices);
        let (_, _, probs) = model.classify(&x)?;
        Ok(probs)
    })
}

/// Accuracy of the probability-space ensemble of all models.
pub fn evaluate_ensemble(models: &[&Classifier], test: &Dataset) -> Result<f64> {
    evaluate_with(test, |indices| {
        let x = test.gather_features(indices);
        ensemble_predict(models, &x)
    })
}

/// Mean of the individual models' accuracies. Used where no single global
/// model exists (parameterless sharing, private feature extractors).
pub fn evaluate_mean_over_models(models: &[&Classifier], test: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for model in models {
        total += evaluate_model(model, test)?;
    }
    Ok(total / models.len() as f64)
}

fn evaluate_with<F>(test: &Dataset, probs_for: F) -> Result<f64>
where
    F: Fn(&[usize]) -> Result<crate::numerics::Tensor> + Sync,
{
    let indices: Vec<usize> = (0..test.len()).collect();
    let correct: Result<Vec<u64>> = chunk_ranges(test.len())
        .par_iter()
        .map(|&(lo, hi)| {
            let chunk = &indices[lo..hi];
            let probs = probs_for(chunk)?;
            let mut hits = 0u64;
            for (r, &idx) in chunk.iter().enumerate() {
                if argmax_tie_low(probs.row(r)) == test.labels()[idx] {
                    hits += 1;
                }
            }
            Ok(hits)
        })
        .collect();
    Ok(correct?.iter().sum::<u64>() as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ClassifierArch;
    use crate::numerics::{Activation, Tensor};
    use crate::rng::derive_rng;

    #[test]
    fn tie_breaks_to_lowest_index() {
        assert_eq!(argmax_tie_low(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax_tie_low(&[0.5, 0.5, 0.5]), 0);
        assert_eq!(argmax_tie_low(&[0.1, 0.2, 0.7]), 2);
    }

    #[test]
    fn uniform_model_scores_class_zero_frequency() {
        // All-zero weights → all logits zero → every argmax is class 0.
        let arch = ClassifierArch {
            input_dim: 2,
            feature_widths: vec![4],
            num_classes: 4,
            hidden_activation: Activation::Relu,
        };
        let mut clf = Classifier::init(&arch, &mut derive_rng(1, &[1]));
        for t in clf.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        let features = Tensor::zeros(&[8, 2]);
        let labels = vec![0, 1, 2, 3, 0, 1, 2, 3];
        let test = Dataset::new(features, labels, 4).unwrap();
        let acc = evaluate_model(&clf, &test).unwrap();
        assert_eq!(acc, 0.25);
    }

    #[test]
    fn perfect_predictions_score_one() {
        // Identity extractor + rigged linear layer mapping feature i to
        // class i.
        let arch = ClassifierArch {
            input_dim: 3,
            feature_widths: vec![],
            num_classes: 3,
            hidden_activation: Activation::Relu,
        };
        let mut clf = Classifier::init(&arch, &mut derive_rng(2, &[1]));
        for t in clf.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        {
            let mut tensors = clf.tensors_mut();
            let w = &mut tensors[0];
            for i in 0..3 {
                w.data_mut()[i * 3 + i] = 10.0;
            }
        }
        let mut features = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            features.row_mut(i)[i] = 1.0;
        }
        let test = Dataset::new(features, vec![0, 1, 2], 3).unwrap();
        assert_eq!(evaluate_model(&clf, &test).unwrap(), 1.0);
    }
}
