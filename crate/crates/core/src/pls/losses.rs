//! Mixup, weighted classification loss, interpolated contrastive labels and
//! loss, and class-balance regularization.

use crate::error::{shape_err, Error, Result};
use crate::model::NetworkVars;
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, Var};

/// Non-fatal conditions reported alongside a loss value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossWarning {
    /// Every mixed weight was zero; the loss is a constant 0.
    ZeroWeights,
    /// A single-sample batch: the only positive is the sample's own view.
    SingleSample,
}

/// `a_mix = lambda * a + (1 - lambda) * a[perm]` for inputs, targets and
/// weights, with one `lambda` for the whole batch.
pub fn mixup_batch<T: Scalar>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    w: &[T],
    lambda: f64,
    perm: &[usize],
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let b = x.rows();
    if y.rows() != b || w.len() != b || perm.len() != b {
        return shape_err(
            "mixup_batch",
            format!("batch {b}: targets {}, weights {}, perm {}", y.rows(), w.len(), perm.len()),
        );
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Contract(format!("mixup lambda {lambda} outside [0, 1]")));
    }
    let x_mix = interpolate_rows(x, perm, lambda)?;
    let y_mix = interpolate_rows(y, perm, lambda)?;
    let (l, m) = (T::of(lambda), T::of(1.0 - lambda));
    let w_mix = w.iter().zip(perm).map(|(&a, &p)| l * a + m * w[p]).collect();
    Ok((x_mix, y_mix, w_mix))
}

/// `coef * t + (1 - coef) * t[perm]`.
pub fn interpolate_rows<T: Scalar>(t: &Tensor<T>, perm: &[usize], coef: f64) -> Result<Tensor<T>> {
    let partner = t.select_rows(perm);
    let (l, m) = (T::of(coef), T::of(1.0 - coef));
    t.zip_broadcast(&partner, "interpolate_rows", |a, b| l * a + m * b)
}

/// Weighted, weight-normalized cross-entropy
/// `(1 / sum w) * sum_i -w_i <y_i, log p_i>`.
pub fn classification_loss<T: Scalar>(
    graph: &mut Graph<T>,
    probs: Var,
    targets: &Tensor<T>,
    weights: &[T],
) -> Result<(Var, Option<LossWarning>)> {
    let shape = graph.value(probs).shape();
    if targets.shape() != shape || weights.len() != shape.0 {
        return shape_err(
            "classification_loss",
            format!("probs {shape:?}, targets {:?}, weights {}", targets.shape(), weights.len()),
        );
    }
    let total: T = weights.iter().copied().sum();
    if total <= T::zero() {
        return Ok((graph.constant(Tensor::scalar(T::zero())), Some(LossWarning::ZeroWeights)));
    }
    let mut coef = targets.clone();
    for (r, &w) in weights.iter().enumerate() {
        let s = w / total;
        coef.row_mut(r).iter_mut().for_each(|v| *v = *v * s);
    }
    let coef = graph.constant(coef);
    let logp = graph.log(probs);
    let weighted = graph.mul(coef, logp)?;
    let sum = graph.sum(weighted);
    Ok((graph.scale(sum, -T::one()), None))
}

/// One-hot rows of width `classes`.
pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(labels.len(), classes);
    for (r, &y) in labels.iter().enumerate() {
        t.set(r, y, T::one());
    }
    t
}

/// Row `i` is `[w_i * y_i || (1 - w_i) * e_i]`, width `C + B`.
pub fn build_contrastive_labels<T: Scalar>(labels: &Tensor<T>, weights: &[T]) -> Result<Tensor<T>> {
    let (b, c) = labels.shape();
    if weights.len() != b {
        return shape_err(
            "build_contrastive_labels",
            format!("{b} rows but {} weights", weights.len()),
        );
    }
    let mut out = Tensor::zeros(b, c + b);
    for (i, &w) in weights.iter().enumerate() {
        let row = out.row_mut(i);
        for (o, &y) in row[..c].iter_mut().zip(labels.row(i)) {
            *o = w * y;
        }
        row[c + i] = T::one() - w;
    }
    Ok(out)
}

/// Row-wise cross-entropy between label-similarity targets and the softmax
/// of embedding similarities.
///
/// With `L = Y Y^T` and `P = A B^T / mu`, the loss is
/// `(1/B) sum_i -<L_i, log softmax(P_i)> / sum_j L_ij`; rows of `L` that sum
/// to zero contribute nothing. `anchors` and `views` must be L2-normalized
/// embeddings with one row per sample.
pub fn contrastive_loss_from_embeddings<T: Scalar>(
    graph: &mut Graph<T>,
    anchors: Var,
    views: Var,
    mixed_labels: &Tensor<T>,
    temperature: f64,
) -> Result<(Var, Option<LossWarning>)> {
    let b = graph.value(anchors).rows();
    if graph.value(views).rows() != b || mixed_labels.rows() != b {
        return shape_err(
            "contrastive_loss",
            format!(
                "anchors {b}, views {}, labels {}",
                graph.value(views).rows(),
                mixed_labels.rows()
            ),
        );
    }
    if !(temperature > 0.0) {
        return Err(Error::Contract("contrastive temperature must be > 0".into()));
    }
    let similarity = mixed_labels.matmul(&mixed_labels.transpose())?;
    let mut coef = similarity;
    let inv_b = T::one() / T::of(b as f64);
    for r in 0..b {
        let row = coef.row_mut(r);
        let total: T = row.iter().copied().sum();
        if total > T::zero() {
            row.iter_mut().for_each(|v| *v = *v / total * inv_b);
        } else {
            row.iter_mut().for_each(|v| *v = T::zero());
        }
    }
    let coef = graph.constant(coef);
    let views_t = graph.transpose(views);
    let dots = graph.matmul(anchors, views_t)?;
    let logits = graph.scale(dots, T::one() / T::of(temperature));
    let sm = graph.softmax_rows(logits)?;
    let log_sm = graph.log(sm);
    let weighted = graph.mul(coef, log_sm)?;
    let sum = graph.sum(weighted);
    let loss = graph.scale(sum, -T::one());
    let warning = (b == 1).then_some(LossWarning::SingleSample);
    Ok((loss, warning))
}

/// InputMix contrastive objective: weak views and their contrastive labels
/// are interpolated with partner samples using `beta`, embedded, and
/// contrasted against the strong views.
#[allow(clippy::too_many_arguments)]
pub fn contrastive_loss<T: Scalar>(
    graph: &mut Graph<T>,
    vars: &NetworkVars,
    weak: &Tensor<T>,
    strong: &Tensor<T>,
    labels: &Tensor<T>,
    beta: f64,
    perm: &[usize],
    temperature: f64,
) -> Result<(Var, Option<LossWarning>)> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Contract(format!("InputMix beta {beta} outside [0, 1]")));
    }
    if weak.shape() != strong.shape() || labels.rows() != weak.rows() || perm.len() != weak.rows() {
        return shape_err("contrastive_loss", "weak/strong views, labels and permutation disagree");
    }
    let x_mix = interpolate_rows(weak, perm, beta)?;
    let y_mix = interpolate_rows(labels, perm, beta)?;
    let x_mix = graph.constant(x_mix);
    let x_strong = graph.constant(strong.clone());
    let (_, f_mix) = vars.forward(graph, x_mix)?;
    let (_, f_strong) = vars.forward(graph, x_strong)?;
    let anchors = vars.project(graph, f_mix)?;
    let views = vars.project(graph, f_strong)?;
    contrastive_loss_from_embeddings(graph, anchors, views, &y_mix, temperature)
}

/// `sum_c (1/C) log((1/C) / h_c)` with `h` the batch-mean prediction.
pub fn class_balance_reg<T: Scalar>(graph: &mut Graph<T>, probs: Var) -> Result<Var> {
    let (rows, c) = graph.value(probs).shape();
    if rows == 0 {
        return Err(Error::Contract("class_balance_reg on an empty batch".into()));
    }
    let mean_pred = graph.mean_over_rows(probs);
    let log_h = graph.log(mean_pred);
    let avg = graph.mean(log_h);
    let neg = graph.scale(avg, -T::one());
    let prior = graph.constant(Tensor::scalar(T::of((1.0 / c as f64).ln())));
    graph.add(neg, prior)
}
