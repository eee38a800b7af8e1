//! Accuracy and rank-based retrieval AUC.

use crate::data::Provenance;
use crate::error::{Error, Result};
use crate::pls::EpochState;
use crate::scalar::Scalar;
use crate::tensor::argmax;

/// Scores to rank and the flags marking which items should rank high.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalTask {
    pub scores: Vec<f64>,
    pub positives: Vec<bool>,
}

impl RetrievalTask {
    pub fn auc(&self) -> Result<f64> {
        auc(&self.scores, &self.positives)
    }
}

/// Area under the ROC curve computed as the Mann-Whitney statistic:
/// the probability that a random positive outscores a random negative,
/// with ties counted as one half.
pub fn auc<T: Scalar>(scores: &[T], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::Contract(format!(
            "auc: {} scores but {} labels",
            scores.len(),
            positives.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("auc: NaN score".into()));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "auc needs both classes ({n_pos} positives, {n_neg} negatives)"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaN"));

    // Sum of mid-ranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| positives[k]).count();
        rank_sum += mid_rank * tied_pos as f64;
        i = j;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * q))
}

/// Fraction of matching class indices.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Contract(format!(
            "accuracy: {} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Retrieval of correctly guessed pseudo-labels among detected-noisy samples
/// carrying in-distribution noise. OOD samples have no correct label and are
/// left out. Higher score means lower pseudo-loss.
pub fn pseudo_correctness<T: Scalar>(
    state: &EpochState<T>,
    true_labels: &[Option<usize>],
    provenance: &[Provenance],
) -> Result<RetrievalTask> {
    let n = state.len();
    if true_labels.len() != n || provenance.len() != n {
        return Err(Error::Contract("pseudo_correctness: length mismatch".into()));
    }
    let mut task = RetrievalTask {
        scores: Vec::new(),
        positives: Vec::new(),
    };
    for i in 0..n {
        if state.clean_mask[i] || provenance[i] != Provenance::IdNoise {
            continue;
        }
        let Some(truth) = true_labels[i] else { continue };
        task.scores.push(-state.pseudo_loss[i].to_f64_lossy());
        task.positives.push(argmax(state.pseudo_label.row(i)) == truth);
    }
    if task.scores.is_empty() {
        return Err(Error::UndefinedMetric(
            "no detected-noisy in-distribution samples".into(),
        ));
    }
    Ok(task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Quadratic pairwise count, the definition the rank formula must match.
    fn auc_pairwise(scores: &[f64], pos: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if pos[i] && !pos[j] {
                    den += 1.0;
                    if si > sj {
                        num += 1.0;
                    } else if si == sj {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn separated_and_tied() {
        assert_eq!(auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.2, 0.9, 0.8], &[true, true, false, false]).unwrap(), 0.0);
        assert_eq!(auc(&[1.0; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(
            auc(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 2, 2], &[0, 1, 1, 0]).unwrap(), 0.5);
        assert!(accuracy(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn matches_pairwise_definition(
            pairs in prop::collection::vec((0u8..6, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let pos: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(pos.iter().any(|&p| p) && pos.iter().any(|&p| !p));
            let fast = auc(&scores, &pos).unwrap();
            prop_assert!((fast - auc_pairwise(&scores, &pos)).abs() < 1e-12);
        }

        #[test]
        fn complement_and_monotone_invariance(
            pairs in prop::collection::vec((-50i32..50, any::<bool>()), 2..80)
        ) {
            let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 7.0).collect();
            let pos: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(pos.iter().any(|&p| p) && pos.iter().any(|&p| !p));
            let a = auc(&scores, &pos).unwrap();
            let neg: Vec<bool> = pos.iter().map(|p| !p).collect();
            prop_assert!((a + auc(&scores, &neg).unwrap() - 1.0).abs() < 1e-12);
            let warped: Vec<f64> = scores.iter().map(|s| (s * 0.3).exp() + s * s * s).collect();
            prop_assert!((a - auc(&warped, &pos).unwrap()).abs() < 1e-12);
        }
    }
}
