use super::{Tensor, EPS};
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Pow(Var, T),
    Exp(Var),
    Log(Var),
    Relu(Var),
    SoftmaxRows(Var),
    L2NormalizeRows(Var),
    ConcatCols(Var, Var),
    MeanOverRows(Var),
    MeanOverCols(Var),
    Mean(Var),
    Scale(Var, T),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Define-by-run computation graph.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and [`Graph::backward`] walks it in reverse. A graph is
/// meant to live for one minibatch.
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    clamped_norms: usize,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            clamped_norms: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant; no gradient is accumulated for it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` call with respect to `v`, if `v`
    /// lies on a differentiable path to the loss.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Number of rows whose norm was clamped by `l2_normalize_rows`.
    pub fn clamped_norms(&self) -> usize {
        self.clamped_norms
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn unary(&mut self, a: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(a, b, v, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.unary(a, v, Op::Transpose(a))
    }

    /// `a + b`; `b` may be a `1 x n` row vector broadcast over rows.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Sub(a, b)))
    }

    /// Elementwise product, same broadcasting rule as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Mul(a, b)))
    }

    pub fn pow(&mut self, a: Var, p: T) -> Var {
        let v = self.value(a).powf(p);
        self.unary(a, v, Op::Pow(a, p))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).exp();
        self.unary(a, v, Op::Exp(a))
    }

    /// Natural log of `max(a, 1e-12)`; zero gradient inside the clamp.
    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).log_clamped();
        self.unary(a, v, Op::Log(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).relu();
        self.unary(a, v, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).softmax_rows()?;
        Ok(self.unary(a, v, Op::SoftmaxRows(a)))
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let (v, clamped) = self.value(a).l2_normalize_rows();
        if clamped {
            self.clamped_norms += 1;
        }
        self.unary(a, v, Op::L2NormalizeRows(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).concat_cols(self.value(b))?;
        Ok(self.binary(a, b, v, Op::ConcatCols(a, b)))
    }

    /// Column means (`1 x n`).
    pub fn mean_over_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).mean_over_rows();
        self.unary(a, v, Op::MeanOverRows(a))
    }

    /// Row means (`m x 1`).
    pub fn mean_over_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).mean_over_cols();
        self.unary(a, v, Op::MeanOverCols(a))
    }

    /// Global mean (`1 x 1`).
    pub fn mean(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).mean());
        self.unary(a, v, Op::Mean(a))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).scale(s);
        self.unary(a, v, Op::Scale(a, s))
    }

    /// Global sum, composed as `mean * len`.
    pub fn sum(&mut self, a: Var) -> Var {
        let n = T::of(self.value(a).len() as f64);
        let m = self.mean(a);
        self.scale(m, n)
    }

    /// Populates gradients of the scalar `loss` for every node that requires
    /// one. Gradients from an earlier call are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(Tensor::scalar(T::one()));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = self.grads[id].take() else {
                continue;
            };
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.rg(a) {
                        let ga = g.matmul(&self.value(b).transpose())?;
                        self.accumulate(a, ga)?;
                    }
                    if self.rg(b) {
                        let gb = self.value(a).transpose().matmul(&g)?;
                        self.accumulate(b, gb)?;
                    }
                }
                Op::Transpose(a) => self.accumulate(a, g.transpose())?,
                Op::Add(a, b) => {
                    self.accumulate(a, g.clone())?;
                    let gb = self.reduce_broadcast(b, g.clone());
                    self.accumulate(b, gb)?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, g.clone())?;
                    let gb = self.reduce_broadcast(b, g.scale(-T::one()));
                    self.accumulate(b, gb)?;
                }
                Op::Mul(a, b) => {
                    if self.rg(a) {
                        let ga = g.mul(self.value(b))?;
                        self.accumulate(a, ga)?;
                    }
                    if self.rg(b) {
                        let full = g.mul(self.value(a))?;
                        let gb = self.reduce_broadcast(b, full);
                        self.accumulate(b, gb)?;
                    }
                }
                Op::Pow(a, p) => {
                    let local = self.value(a).map(|x| p * x.powf(p - T::one()));
                    self.accumulate(a, g.mul(&local)?)?;
                }
                Op::Exp(a) => {
                    let ga = g.mul(&self.nodes[id].value)?;
                    self.accumulate(a, ga)?;
                }
                Op::Log(a) => {
                    let eps = T::of(EPS);
                    let local = self
                        .value(a)
                        .map(|x| if x > eps { T::one() / x } else { T::zero() });
                    self.accumulate(a, g.mul(&local)?)?;
                }
                Op::Relu(a) => {
                    let local = self
                        .value(a)
                        .map(|x| if x > T::zero() { T::one() } else { T::zero() });
                    self.accumulate(a, g.mul(&local)?)?;
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[id].value;
                    let mut ga = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: T = yr.iter().zip(gr).map(|(&u, &v)| u * v).sum();
                        for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yv * (gv - dot);
                        }
                    }
                    self.accumulate(a, ga)?;
                }
                Op::L2NormalizeRows(a) => {
                    let eps = T::of(EPS);
                    let x = self.value(a);
                    let y = &self.nodes[id].value;
                    let norms = x.row_norms();
                    let mut ga = Tensor::zeros(x.rows(), x.cols());
                    for (r, &norm) in norms.iter().enumerate() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        if norm < eps {
                            for (o, &gv) in ga.row_mut(r).iter_mut().zip(gr) {
                                *o = gv / eps;
                            }
                        } else {
                            let dot: T = yr.iter().zip(gr).map(|(&u, &v)| u * v).sum();
                            for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                                *o = (gv - yv * dot) / norm;
                            }
                        }
                    }
                    self.accumulate(a, ga)?;
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(a).cols();
                    let cb = self.value(b).cols();
                    let mut ga = Tensor::zeros(g.rows(), ca);
                    let mut gb = Tensor::zeros(g.rows(), cb);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    self.accumulate(a, ga)?;
                    self.accumulate(b, gb)?;
                }
                Op::MeanOverRows(a) => {
                    let (m, n) = self.value(a).shape();
                    let inv = T::one() / T::of(m as f64);
                    let mut ga = Tensor::zeros(m, n);
                    for r in 0..m {
                        for (o, &gv) in ga.row_mut(r).iter_mut().zip(g.row(0)) {
                            *o = gv * inv;
                        }
                    }
                    self.accumulate(a, ga)?;
                }
                Op::MeanOverCols(a) => {
                    let (m, n) = self.value(a).shape();
                    let inv = T::one() / T::of(n as f64);
                    let mut ga = Tensor::zeros(m, n);
                    for r in 0..m {
                        let gv = g.get(r, 0) * inv;
                        ga.row_mut(r).iter_mut().for_each(|o| *o = gv);
                    }
                    self.accumulate(a, ga)?;
                }
                Op::Mean(a) => {
                    let (m, n) = self.value(a).shape();
                    let gv = g.get(0, 0) / T::of((m * n) as f64);
                    self.accumulate(a, Tensor::full(m, n, gv))?;
                }
                Op::Scale(a, s) => self.accumulate(a, g.scale(s))?,
            }
            self.grads[id] = Some(g);
        }
        Ok(())
    }

    /// Sums a full-shape gradient down to `target`'s shape when `target`
    /// was broadcast as a row vector.
    fn reduce_broadcast(&self, target: Var, g: Tensor<T>) -> Tensor<T> {
        let shape = self.value(target).shape();
        if shape == g.shape() {
            return g;
        }
        let mut out = Tensor::zeros(1, g.cols());
        for r in 0..g.rows() {
            for (o, &v) in out.data_mut().iter_mut().zip(g.row(r)) {
                *o = *o + v;
            }
        }
        out
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) -> Result<()> {
        if !self.rg(v) {
            return Ok(());
        }
        if g.shape() != self.value(v).shape() {
            return shape_err(
                "backward",
                format!(
                    "gradient {:?} for node of shape {:?}",
                    g.shape(),
                    self.value(v).shape()
                ),
            );
        }
        match &mut self.grads[v.0] {
            Some(acc) => {
                for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a = *a + b;
                }
            }
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_has_unit_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.0, 4.0]]).unwrap());
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &Tensor::full(2, 3, 1.0));
    }

    #[test]
    fn square_at_three() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item().unwrap(), 6.0);

        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.pow(x, 2.0);
        g.backward(y).unwrap();
        assert!((g.grad(x).unwrap().item().unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::zeros(2, 2));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(2.0));
        let c = g.constant(Tensor::scalar(5.0));
        let y = g.mul(x, c).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item().unwrap(), 5.0);
        assert!(g.grad(c).is_none());
    }

    #[test]
    fn broadcast_bias_gradient_sums_rows() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(3, 2));
        let b = g.param(Tensor::from_rows(&[[1.0, 2.0]]).unwrap());
        let y = g.add(x, b).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(b).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn zero_row_normalization_is_flagged() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::zeros(1, 3));
        g.l2_normalize_rows(x);
        assert_eq!(g.clamped_norms(), 1);
    }
}
