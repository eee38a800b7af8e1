//! Stage one (small-loss noise detection) and stage two (pseudo-label
//! guessing, pseudo-loss and the correctness weight `w`).

use rand::Rng;

use crate::data::{augment_with, AugmentParams, Strength};
use crate::error::{Error, Result};
use crate::gmm::{fit_gmm_1d, GmmFit, GmmOptions, MIN_SAMPLES};
use crate::model::Network;
use crate::scalar::Scalar;
use crate::tensor::{Tensor, EPS};

/// Per-sample cross-entropy `-log p[label]` on unaugmented inputs.
pub fn small_loss_scan<T: Scalar>(net: &Network<T>, x: &Tensor<T>, labels: &[usize]) -> Result<Vec<T>> {
    if x.rows() != labels.len() {
        return Err(Error::Contract(format!(
            "small_loss_scan: {} rows but {} labels",
            x.rows(),
            labels.len()
        )));
    }
    let (probs, _) = net.forward_probs(x)?;
    Ok(losses_from_probs(&probs, labels))
}

pub fn losses_from_probs<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Vec<T> {
    let eps = T::of(EPS);
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs.get(i, y).max(eps).ln())
        .collect()
}

/// Outcome of stage-one detection.
#[derive(Debug, Clone)]
pub struct Detection<T> {
    pub clean_mask: Vec<bool>,
    pub fit: GmmFit<T>,
}

/// Marks a sample clean when its posterior of belonging to the low-loss
/// mode exceeds `threshold`. A degenerate fit marks everything clean.
pub fn detect_noise<T: Scalar>(losses: &[T], threshold: f64, options: &GmmOptions) -> Result<Detection<T>> {
    let fit = fit_gmm_1d(losses, options)?;
    let clean_mask = if fit.degenerate {
        vec![true; losses.len()]
    } else {
        let t = T::of(threshold);
        losses.iter().map(|&l| fit.posterior_low(l) > t).collect()
    };
    Ok(Detection { clean_mask, fit })
}

/// Averages two predictions, raises to `gamma` and divides each row by its
/// maximum so the largest entry is exactly 1.
pub fn sharpen_pseudo_labels<T: Scalar>(p1: &Tensor<T>, p2: &Tensor<T>, gamma: f64) -> Result<Tensor<T>> {
    if p1.shape() != p2.shape() {
        return Err(Error::Shape {
            op: "sharpen_pseudo_labels",
            detail: format!("{:?} vs {:?}", p1.shape(), p2.shape()),
        });
    }
    let half = T::of(0.5);
    let mut out = p1.zip_broadcast(p2, "sharpen_pseudo_labels", |a, b| (a + b) * half)?;
    let g = T::of(gamma);
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        row.iter_mut().for_each(|v| *v = v.powf(g));
        let max = row.iter().copied().fold(T::zero(), T::max);
        if max > T::zero() {
            row.iter_mut().for_each(|v| *v = *v / max);
        } else {
            row.iter_mut().for_each(|v| *v = T::one());
        }
    }
    Ok(out)
}

/// Pseudo-labels guessed from two weak views, plus the confidence (top
/// entry of the averaged prediction) used by threshold selection.
#[derive(Debug, Clone)]
pub struct PseudoLabels<T> {
    pub labels: Tensor<T>,
    pub confidence: Vec<T>,
}

/// Applies `strength` augmentation independently to every row.
pub fn augment_rows<T: Scalar, R: Rng + ?Sized>(
    x: &Tensor<T>,
    strength: Strength,
    params: &AugmentParams,
    rng: &mut R,
) -> Tensor<T> {
    let mut out = x.clone();
    let mut buf = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for (b, v) in buf.iter_mut().zip(x.row(r)) {
            *b = v.to_f64_lossy();
        }
        let aug = augment_with(&buf, strength, params, rng);
        for (o, a) in out.row_mut(r).iter_mut().zip(aug) {
            *o = T::of(a);
        }
    }
    out
}

pub fn guess_pseudo_labels<T: Scalar, R: Rng + ?Sized>(
    net: &Network<T>,
    x: &Tensor<T>,
    gamma: f64,
    augment: &AugmentParams,
    rng: &mut R,
) -> Result<PseudoLabels<T>> {
    let v1 = augment_rows(x, Strength::Weak, augment, rng);
    let v2 = augment_rows(x, Strength::Weak, augment, rng);
    let (p1, _) = net.forward_probs(&v1)?;
    let (p2, _) = net.forward_probs(&v2)?;
    pseudo_labels_from_views(&p1, &p2, gamma)
}

pub fn pseudo_labels_from_views<T: Scalar>(p1: &Tensor<T>, p2: &Tensor<T>, gamma: f64) -> Result<PseudoLabels<T>> {
    let half = T::of(0.5);
    let confidence = (0..p1.rows())
        .map(|r| {
            p1.row(r)
                .iter()
                .zip(p2.row(r))
                .map(|(&a, &b)| (a + b) * half)
                .fold(T::zero(), T::max)
        })
        .collect();
    Ok(PseudoLabels {
        labels: sharpen_pseudo_labels(p1, p2, gamma)?,
        confidence,
    })
}

/// `-sum_c y[c] log p[c]` per row.
pub fn pseudo_loss_from_probs<T: Scalar>(probs: &Tensor<T>, pseudo: &Tensor<T>) -> Result<Vec<T>> {
    if probs.shape() != pseudo.shape() {
        return Err(Error::Shape {
            op: "pseudo_loss",
            detail: format!("{:?} vs {:?}", probs.shape(), pseudo.shape()),
        });
    }
    let eps = T::of(EPS);
    Ok((0..probs.rows())
        .map(|r| {
            -probs
                .row(r)
                .iter()
                .zip(pseudo.row(r))
                .map(|(&p, &y)| y * p.max(eps).ln())
                .sum::<T>()
        })
        .collect())
}

/// Pseudo-loss of the model's prediction on the unaugmented inputs.
pub fn pseudo_loss<T: Scalar>(net: &Network<T>, x: &Tensor<T>, pseudo: &Tensor<T>) -> Result<Vec<T>> {
    let (probs, _) = net.forward_probs(x)?;
    pseudo_loss_from_probs(&probs, pseudo)
}

/// Correctness weights: 1 for clean samples; for detected-noisy samples the
/// low-mode posterior of a mixture fitted to their pseudo-losses only,
/// made monotone by [`GmmFit::posterior_low_monotone`].
/// With fewer than ten noisy samples every noisy weight is 0.
pub fn compute_w<T: Scalar>(
    pseudo_losses: &[T],
    clean_mask: &[bool],
    options: &GmmOptions,
) -> Result<(Vec<T>, Option<GmmFit<T>>)> {
    if pseudo_losses.len() != clean_mask.len() {
        return Err(Error::Contract("compute_w: length mismatch".into()));
    }
    let noisy: Vec<T> = pseudo_losses
        .iter()
        .zip(clean_mask)
        .filter(|(_, &c)| !c)
        .map(|(&l, _)| l)
        .collect();
    if noisy.len() < MIN_SAMPLES {
        let w = clean_mask.iter().map(|&c| if c { T::one() } else { T::zero() }).collect();
        return Ok((w, None));
    }
    let fit = fit_gmm_1d(&noisy, options)?;
    let w = pseudo_losses
        .iter()
        .zip(clean_mask)
        .map(|(&l, &c)| if c { T::one() } else { fit.posterior_low_monotone(l) })
        .collect();
    Ok((w, Some(fit)))
}

/// Threshold alternative to [`compute_w`]: a noisy sample keeps weight 1
/// only when its confidence exceeds `threshold`.
pub fn confidence_w<T: Scalar>(confidence: &[T], clean_mask: &[bool], threshold: f64) -> Vec<T> {
    let t = T::of(threshold);
    confidence
        .iter()
        .zip(clean_mask)
        .map(|(&c, &clean)| if clean || c > t { T::one() } else { T::zero() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn t(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn sharpening_arithmetic() {
        let p = t(&[&[0.8, 0.2]]);
        let y = sharpen_pseudo_labels(&p, &p, 2.0).unwrap();
        assert!((y.get(0, 0) - 1.0).abs() < 1e-9);
        assert!((y.get(0, 1) - 0.0625).abs() < 1e-9);

        let u = t(&[&[0.25; 4]]);
        assert_eq!(sharpen_pseudo_labels(&u, &u, 3.7).unwrap().data(), &[1.0; 4]);

        let q = t(&[&[0.5, 0.3, 0.2]]);
        let y = sharpen_pseudo_labels(&q, &q, 1.0).unwrap();
        for (a, b) in y.data().iter().zip([1.0, 0.6, 0.4]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sharpening_is_view_symmetric() {
        let a = t(&[&[0.7, 0.2, 0.1], &[0.1, 0.1, 0.8]]);
        let b = t(&[&[0.3, 0.3, 0.4], &[0.5, 0.25, 0.25]]);
        assert_eq!(
            sharpen_pseudo_labels(&a, &b, 2.0).unwrap(),
            sharpen_pseudo_labels(&b, &a, 2.0).unwrap()
        );
    }

    #[test]
    fn pseudo_loss_closed_forms() {
        let half = t(&[&[0.5, 0.5]]);
        let l = pseudo_loss_from_probs(&half, &t(&[&[1.0, 0.0]])).unwrap()[0];
        assert!((l - 2f64.ln()).abs() < 1e-12);
        let l = pseudo_loss_from_probs(&half, &t(&[&[1.0, 1.0]])).unwrap()[0];
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        let l = pseudo_loss_from_probs(&t(&[&[0.0, 1.0]]), &t(&[&[0.0, 1.0]])).unwrap()[0];
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn small_loss_closed_forms() {
        let uniform = Tensor::full(4, 3, 1.0 / 3.0);
        for l in losses_from_probs(&uniform, &[0, 1, 2, 0]) {
            assert!((l - 3f64.ln()).abs() < 1e-12);
        }
        let onehot = t(&[&[0.0, 1.0, 0.0]]);
        assert!(losses_from_probs(&onehot, &[1])[0].abs() < 1e-12);
        // clamped, not infinite
        assert!((losses_from_probs(&onehot, &[0])[0] - 1e12f64.ln()).abs() < 1e-9);
    }

    fn bimodal(n_low: usize, n_high: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let low = Normal::new(0.2, 0.05).unwrap();
        let high = Normal::new(2.0, 0.2).unwrap();
        let mut v: Vec<(f64, bool)> = (0..n_low).map(|_| (low.sample(&mut rng), true)).collect();
        v.extend((0..n_high).map(|_| (high.sample(&mut rng), false)));
        v.into_iter().unzip()
    }

    #[test]
    fn detection_recovers_planted_low_mode() {
        let (losses, planted_clean) = bimodal(700, 300, 5);
        let det = detect_noise(&losses, 0.95, &GmmOptions::default()).unwrap();
        let agree = det.clean_mask.iter().zip(&planted_clean).filter(|(a, b)| a == b).count();
        assert!(agree as f64 / 1000.0 >= 0.99, "agreement {agree}");
    }

    #[test]
    fn detection_edge_cases() {
        let det = detect_noise(&[0.7; 15], 0.95, &GmmOptions::default()).unwrap();
        assert!(det.clean_mask.iter().all(|&c| c));
        let (losses, _) = bimodal(50, 50, 1);
        let det = detect_noise(&losses, 1.0, &GmmOptions::default()).unwrap();
        for (i, &c) in det.clean_mask.iter().enumerate() {
            assert_eq!(c, det.fit.posterior_low(losses[i]) > 1.0);
        }
        assert!(detect_noise(&[0.1, 0.2], 0.95, &GmmOptions::default()).is_err());
    }

    #[test]
    fn w_from_planted_pseudo_losses() {
        let (losses, correct) = bimodal(200, 200, 9);
        let mut all = vec![0.0; 50];
        all.extend(&losses);
        let mut mask = vec![true; 50];
        mask.extend(std::iter::repeat_n(false, 400));
        let (w, fit) = compute_w(&all, &mask, &GmmOptions::default()).unwrap();
        assert!(fit.is_some());
        assert!(w[..50].iter().all(|&v| v == 1.0));
        for (wi, &c) in w[50..].iter().zip(&correct) {
            if c {
                assert!(*wi > 0.9);
            } else {
                assert!(*wi < 0.1);
            }
        }
    }

    #[test]
    fn w_monotone_in_pseudo_loss() {
        let (losses, _) = bimodal(100, 60, 2);
        let mask = vec![false; losses.len()];
        let (w, _) = compute_w(&losses, &mask, &GmmOptions::default()).unwrap();
        let mut pairs: Vec<(f64, f64)> = losses.iter().copied().zip(w.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // Equal-variance monotonicity is not guaranteed for unequal
        // variances far in the tails; check the region between the means.
        let inner: Vec<&(f64, f64)> = pairs.iter().filter(|p| p.0 > 0.2 && p.0 < 2.0).collect();
        assert!(inner.windows(2).all(|p| p[1].1 <= p[0].1 + 1e-12));
        assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn w_degenerate_and_sparse_rules() {
        let mask = [true, false, false, false, false, false, false, false, false, false, false, false];
        let (w, _) = compute_w(&[3.0; 12], &mask, &GmmOptions::default()).unwrap();
        assert!(w.iter().all(|&v| v == 1.0));
        let (w, fit) = compute_w(&[0.5, 1.0, 2.0], &[true, false, false], &GmmOptions::default()).unwrap();
        assert!(fit.is_none());
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn confidence_threshold_weights() {
        let w = confidence_w(&[0.99, 0.5, 0.95, 0.2], &[false, false, false, true], 0.9);
        assert_eq!(w, vec![1.0, 0.0, 1.0, 1.0]);
    }
}
