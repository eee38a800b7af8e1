#![allow(dead_code)]

use pls_core::model::{Dims, Network, NetworkVars};
use pls_core::pls::{
    build_contrastive_labels, class_balance_reg, classification_loss, contrastive_loss, mixup_batch, one_hot,
};
use pls_core::tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error of near-zero gradients.
pub const FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Largest relative error between backprop gradients and central differences
/// of `build` with respect to every entry of every input.
pub fn fd_max_rel_err<F>(inputs: &[Tensor<f64>], build: F) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let eval = |xs: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.param(x.clone())).collect();
        let loss = build(&mut g, &vars);
        g.value(loss).item().unwrap()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
    let loss = build(&mut g, &vars);
    g.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = g
            .grad(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()));
        for i in 0..x.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            worst = worst.max(rel_err(analytic.data()[i], numeric));
        }
    }
    worst
}

/// Reduces a matrix output to a scalar through fixed random weights so every
/// output entry contributes a distinct gradient.
pub fn project_to_scalar(g: &mut Graph<f64>, out: Var, weights: &Tensor<f64>) -> Var {
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w).unwrap();
    g.sum(prod)
}

/// One random B=4, C=3, d=5 training batch with everything the losses need.
#[derive(Debug, Clone)]
pub struct LossInstance {
    pub net: Network<f64>,
    pub x_mix: Tensor<f64>,
    pub y_mix: Tensor<f64>,
    pub w_mix: Vec<f64>,
    pub weak: Tensor<f64>,
    pub strong: Tensor<f64>,
    pub y_cont: Tensor<f64>,
    pub beta: f64,
    pub perm: Vec<usize>,
    pub temperature: f64,
}

pub const B: usize = 4;
pub const C: usize = 3;
pub const D: usize = 5;

impl LossInstance {
    pub fn random(seed: u64) -> Self {
        let mut r = rng(seed);
        let net = Network::init(Dims::new(D, 8, C, 4), seed).unwrap();
        let weak = random_tensor(&mut r, B, D, -2.0, 2.0);
        let strong = random_tensor(&mut r, B, D, -2.0, 2.0);
        let mut targets = random_tensor(&mut r, B, C, 0.0, 1.0);
        for i in 0..B {
            let m = targets.row(i).iter().copied().fold(0.0, f64::max);
            targets.row_mut(i).iter_mut().for_each(|v| *v /= m);
        }
        let w: Vec<f64> = (0..B).map(|_| r.random_range(0.0..1.0)).collect();
        let mut perm: Vec<usize> = (0..B).collect();
        perm.rotate_left(1 + (seed as usize % (B - 1)));
        let lambda = r.random_range(0.0..1.0);
        let (x_mix, y_mix, w_mix) = mixup_batch(&weak, &targets, &w, lambda, &perm).unwrap();
        let hard: Vec<usize> = (0..B).map(|_| r.random_range(0..C)).collect();
        let y_cont = build_contrastive_labels(&one_hot(&hard, C), &w).unwrap();
        Self {
            net,
            x_mix,
            y_mix,
            w_mix,
            weak,
            strong,
            y_cont,
            beta: r.random_range(0.0..1.0),
            perm,
            temperature: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Classif,
    Cont,
    ClassReg,
    Total,
}

/// Builds the chosen loss with the network parameters bound to `params`.
pub fn build_loss(inst: &LossInstance, kind: LossKind, g: &mut Graph<f64>, params: &[Var]) -> Var {
    let vars = NetworkVars::from_vars(params).unwrap();
    let x = g.constant(inst.x_mix.clone());
    let (probs, _) = vars.forward(g, x).unwrap();
    match kind {
        LossKind::Classif => classification_loss(g, probs, &inst.y_mix, &inst.w_mix).unwrap().0,
        LossKind::ClassReg => class_balance_reg(g, probs).unwrap(),
        LossKind::Cont => {
            contrastive_loss(
                g,
                &vars,
                &inst.weak,
                &inst.strong,
                &inst.y_cont,
                inst.beta,
                &inst.perm,
                inst.temperature,
            )
            .unwrap()
            .0
        }
        LossKind::Total => {
            let lc = classification_loss(g, probs, &inst.y_mix, &inst.w_mix).unwrap().0;
            let reg = class_balance_reg(g, probs).unwrap();
            let (lt, _) = contrastive_loss(
                g,
                &vars,
                &inst.weak,
                &inst.strong,
                &inst.y_cont,
                inst.beta,
                &inst.perm,
                inst.temperature,
            )
            .unwrap();
            let s = g.add(lc, lt).unwrap();
            g.add(s, reg).unwrap()
        }
    }
}

/// Max relative error of the chosen loss over `instances` random batches.
pub fn loss_gradcheck(kind: LossKind, instances: u64) -> f64 {
    (0..instances)
        .map(|seed| {
            let inst = LossInstance::random(seed);
            let params: Vec<Tensor<f64>> = inst.net.params().iter().map(|p| (*p).clone()).collect();
            fd_max_rel_err(&params, |g, vars| build_loss(&inst, kind, g, vars))
        })
        .fold(0.0, f64::max)
}
