mod common;

use common::*;
use pls_core::model::{Dims, Network, NetworkVars};
use pls_core::pls::{classification_loss, one_hot};
use pls_core::tensor::{Graph, Tensor, Var};
use rand::Rng;

const INSTANCES: u64 = 100;

/// Runs `make` for each instance seed and checks the projected scalar output.
fn check_op<M, F>(name: &str, make: M, op: F)
where
    M: Fn(&mut rand_chacha::ChaCha8Rng) -> Vec<Tensor<f64>>,
    F: Fn(&mut Graph<f64>, &[Var]) -> Var + Copy,
{
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let inputs = make(&mut r);
        let out_shape = {
            let mut g = Graph::new();
            let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
            let out = op(&mut g, &vars);
            g.value(out).shape()
        };
        let weights = random_tensor(&mut r, out_shape.0, out_shape.1, -1.0, 1.0);
        let err = fd_max_rel_err(&inputs, |g, vars| {
            let out = op(g, vars);
            project_to_scalar(g, out, &weights)
        });
        worst = worst.max(err);
    }
    assert!(worst < REL_TOL, "{name}: max relative error {worst:e}");
}

fn dims(r: &mut rand_chacha::ChaCha8Rng) -> (usize, usize) {
    (r.random_range(1..5), r.random_range(1..5))
}

fn one(lo: f64, hi: f64) -> impl Fn(&mut rand_chacha::ChaCha8Rng) -> Vec<Tensor<f64>> {
    move |r| {
        let (m, n) = dims(r);
        vec![random_tensor(r, m, n, lo, hi)]
    }
}

fn two_same(r: &mut rand_chacha::ChaCha8Rng) -> Vec<Tensor<f64>> {
    let (m, n) = dims(r);
    vec![random_tensor(r, m, n, -2.0, 2.0), random_tensor(r, m, n, -2.0, 2.0)]
}

fn two_broadcast(r: &mut rand_chacha::ChaCha8Rng) -> Vec<Tensor<f64>> {
    let (m, n) = dims(r);
    vec![random_tensor(r, m, n, -2.0, 2.0), random_tensor(r, 1, n, -2.0, 2.0)]
}

/// Entries bounded away from zero so no perturbation crosses the ReLU kink.
fn away_from_zero(r: &mut rand_chacha::ChaCha8Rng) -> Vec<Tensor<f64>> {
    let (m, n) = dims(r);
    let t = random_tensor(r, m, n, 0.05, 2.0);
    let signs = random_tensor(r, m, n, -1.0, 1.0);
    vec![Tensor::new(m, n, t.data().iter().zip(signs.data()).map(|(v, s)| v * s.signum()).collect()).unwrap()]
}

#[test]
fn matmul() {
    check_op(
        "matmul",
        |r| {
            let (m, k) = dims(r);
            let n = r.random_range(1..5);
            vec![random_tensor(r, m, k, -2.0, 2.0), random_tensor(r, k, n, -2.0, 2.0)]
        },
        |g, v| g.matmul(v[0], v[1]).unwrap(),
    );
}

#[test]
fn transpose() {
    check_op("transpose", one(-2.0, 2.0), |g, v| g.transpose(v[0]));
}

#[test]
fn add_sub_mul() {
    check_op("add", two_same, |g, v| g.add(v[0], v[1]).unwrap());
    check_op("sub", two_same, |g, v| g.sub(v[0], v[1]).unwrap());
    check_op("mul", two_same, |g, v| g.mul(v[0], v[1]).unwrap());
}

#[test]
fn broadcast_row_vector() {
    check_op("add bcast", two_broadcast, |g, v| g.add(v[0], v[1]).unwrap());
    check_op("sub bcast", two_broadcast, |g, v| g.sub(v[0], v[1]).unwrap());
    check_op("mul bcast", two_broadcast, |g, v| g.mul(v[0], v[1]).unwrap());
}

#[test]
fn elementwise() {
    check_op("pow", one(0.2, 2.0), |g, v| g.pow(v[0], 2.5));
    check_op("exp", one(-2.0, 2.0), |g, v| g.exp(v[0]));
    check_op("log", one(0.1, 3.0), |g, v| g.log(v[0]));
    check_op("relu", away_from_zero, |g, v| g.relu(v[0]));
    check_op("scale", one(-2.0, 2.0), |g, v| g.scale(v[0], -1.7));
}

#[test]
fn row_ops() {
    check_op("softmax_rows", one(-3.0, 3.0), |g, v| g.softmax_rows(v[0]).unwrap());
    check_op("l2_normalize_rows", away_from_zero, |g, v| g.l2_normalize_rows(v[0]));
    check_op(
        "concat_cols",
        |r| {
            let (m, n) = dims(r);
            let k = r.random_range(1..5);
            vec![random_tensor(r, m, n, -2.0, 2.0), random_tensor(r, m, k, -2.0, 2.0)]
        },
        |g, v| g.concat_cols(v[0], v[1]).unwrap(),
    );
}

#[test]
fn reductions() {
    check_op("mean_over_rows", one(-2.0, 2.0), |g, v| g.mean_over_rows(v[0]));
    check_op("mean_over_cols", one(-2.0, 2.0), |g, v| g.mean_over_cols(v[0]));
    check_op("mean", one(-2.0, 2.0), |g, v| g.mean(v[0]));
    check_op("sum", one(-2.0, 2.0), |g, v| g.sum(v[0]));
}

#[test]
fn mlp_cross_entropy_end_to_end() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut r = rng(seed);
        let net = Network::init(Dims::new(4, 6, 3, 2), seed).unwrap();
        let x = random_tensor(&mut r, 5, 4, -2.0, 2.0);
        let labels: Vec<usize> = (0..5).map(|_| r.random_range(0..3)).collect();
        let y = one_hot::<f64>(&labels, 3);
        let w = vec![1.0; 5];
        let params: Vec<Tensor<f64>> = net.params().iter().map(|p| (*p).clone()).collect();
        worst = worst.max(fd_max_rel_err(&params, |g, vars| {
            let vars = NetworkVars::from_vars(vars).unwrap();
            let xv = g.constant(x.clone());
            let (probs, _) = vars.forward(g, xv).unwrap();
            classification_loss(g, probs, &y, &w).unwrap().0
        }));
    }
    assert!(worst < REL_TOL, "max relative error {worst:e}");
}

#[test]
fn training_losses() {
    for kind in [LossKind::Classif, LossKind::Cont, LossKind::ClassReg, LossKind::Total] {
        let worst = loss_gradcheck(kind, 20);
        assert!(worst < REL_TOL, "{kind:?}: max relative error {worst:e}");
    }
}

#[test]
fn backward_is_bit_identical() {
    let inst = LossInstance::random(3);
    let grads = || {
        let mut g = Graph::new();
        let vars = inst.net.bind(&mut g);
        let loss = build_loss(&inst, LossKind::Total, &mut g, vars.params());
        g.backward(loss).unwrap();
        (g.value(loss).clone(), inst.net.collect_grads(&g, &vars))
    };
    assert_eq!(grads(), grads());
}
