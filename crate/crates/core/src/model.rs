//! Small MLP classifier, linear projection head and SGD.
//!
//! The classifier maps `d -> h -> h -> C` with ReLU activations and a
//! softmax output; the penultimate `h`-dimensional activations are the
//! features fed to the projection head.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
    pub proj: usize,
}

impl Dims {
    pub fn new(input: usize, hidden: usize, classes: usize, proj: usize) -> Self {
        Self {
            input,
            hidden,
            classes,
            proj,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier<T> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
    pub w3: Tensor<T>,
    pub b3: Tensor<T>,
}

/// Bias-free linear map into the contrastive space; outputs are
/// L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead<T> {
    pub w: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub classifier: MlpClassifier<T>,
    pub head: ProjectionHead<T>,
}

/// Graph handles for every parameter of a bound [`Network`].
#[derive(Debug, Clone, Copy)]
pub struct NetworkVars {
    params: [Var; Network::<f64>::PARAM_COUNT],
}

fn uniform_fan_in<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::of(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::new(rows, cols, data).expect("sized buffer")
}

impl<T: Scalar> Network<T> {
    pub const PARAM_COUNT: usize = 7;

    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(dims: Dims, seed: u64) -> Result<Self> {
        if dims.input == 0 || dims.hidden == 0 || dims.classes == 0 || dims.proj == 0 {
            return Err(Error::Config(format!("all network dimensions must be >= 1: {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, h, c, p) = (dims.input, dims.hidden, dims.classes, dims.proj);
        let classifier = MlpClassifier {
            w1: uniform_fan_in(&mut rng, d, h, d),
            b1: uniform_fan_in(&mut rng, 1, h, d),
            w2: uniform_fan_in(&mut rng, h, h, h),
            b2: uniform_fan_in(&mut rng, 1, h, h),
            w3: uniform_fan_in(&mut rng, h, c, h),
            b3: uniform_fan_in(&mut rng, 1, c, h),
        };
        let head = ProjectionHead {
            w: uniform_fan_in(&mut rng, h, p, h),
        };
        Ok(Self { classifier, head })
    }

    pub fn dims(&self) -> Dims {
        Dims {
            input: self.classifier.w1.rows(),
            hidden: self.classifier.w1.cols(),
            classes: self.classifier.w3.cols(),
            proj: self.head.w.cols(),
        }
    }

    pub fn params(&self) -> [&Tensor<T>; 7] {
        let c = &self.classifier;
        [&c.w1, &c.b1, &c.w2, &c.b2, &c.w3, &c.b3, &self.head.w]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<T>; 7] {
        let c = &mut self.classifier;
        [
            &mut c.w1,
            &mut c.b1,
            &mut c.w2,
            &mut c.b2,
            &mut c.w3,
            &mut c.b3,
            &mut self.head.w,
        ]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.cols() != self.dims().input {
            return shape_err(
                "forward_probs",
                format!("input has {} columns, network expects {}", x.cols(), self.dims().input),
            );
        }
        Ok(())
    }

    /// Gradient-free forward pass: class probabilities and penultimate
    /// features.
    pub fn forward_probs(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        self.check_input(x)?;
        let c = &self.classifier;
        let h1 = x.matmul(&c.w1)?.add(&c.b1)?.relu();
        let h2 = h1.matmul(&c.w2)?.add(&c.b2)?.relu();
        let probs = h2.matmul(&c.w3)?.add(&c.b3)?.softmax_rows()?;
        Ok((probs, h2))
    }

    /// Gradient-free projection of features onto the unit sphere.
    pub fn project(&self, features: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(features.matmul(&self.head.w)?.l2_normalize_rows().0)
    }

    /// Records every parameter on `graph` as a gradient-tracked leaf.
    pub fn bind(&self, graph: &mut Graph<T>) -> NetworkVars {
        let p = self.params();
        NetworkVars {
            params: std::array::from_fn(|i| graph.param(p[i].clone())),
        }
    }

    /// Gradients for each parameter (zeros where a parameter did not reach
    /// the loss), in [`Network::params`] order.
    pub fn collect_grads(&self, graph: &Graph<T>, vars: &NetworkVars) -> Vec<Tensor<T>> {
        vars.params
            .iter()
            .zip(self.params())
            .map(|(&v, p)| {
                graph
                    .grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))
            })
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let c = &self.classifier;
        Network {
            classifier: MlpClassifier {
                w1: c.w1.cast(),
                b1: c.b1.cast(),
                w2: c.w2.cast(),
                b2: c.b2.cast(),
                w3: c.w3.cast(),
                b3: c.b3.cast(),
            },
            head: ProjectionHead { w: self.head.w.cast() },
        }
    }
}

impl NetworkVars {
    /// Wraps leaves already recorded on a graph, in [`Network::params`]
    /// order.
    pub fn from_vars(vars: &[Var]) -> Result<Self> {
        let params = vars.try_into().map_err(|_| Error::Shape {
            op: "NetworkVars::from_vars",
            detail: format!("expected {} parameters, got {}", Network::<f64>::PARAM_COUNT, vars.len()),
        })?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    /// Recorded forward pass returning `(probabilities, features)`.
    pub fn forward<T: Scalar>(&self, graph: &mut Graph<T>, x: Var) -> Result<(Var, Var)> {
        let [w1, b1, w2, b2, w3, b3, _] = self.params;
        let z1 = graph.matmul(x, w1)?;
        let z1 = graph.add(z1, b1)?;
        let h1 = graph.relu(z1);
        let z2 = graph.matmul(h1, w2)?;
        let z2 = graph.add(z2, b2)?;
        let h2 = graph.relu(z2);
        let z3 = graph.matmul(h2, w3)?;
        let logits = graph.add(z3, b3)?;
        let probs = graph.softmax_rows(logits)?;
        Ok((probs, h2))
    }

    /// Recorded projection of `features` into the normalized contrastive
    /// space.
    pub fn project<T: Scalar>(&self, graph: &mut Graph<T>, features: Var) -> Result<Var> {
        let z = graph.matmul(features, self.params[6])?;
        Ok(graph.l2_normalize_rows(z))
    }
}

/// SGD with heavy-ball momentum and decoupled weight decay:
/// `v <- m v + g`, `p <- p - lr v - lr wd p`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &[Tensor<T>], lr: f64) -> Result<()> {
        let params = net.params_mut();
        if grads.len() != params.len() {
            return Err(Error::Contract(format!(
                "expected {} gradients, got {}",
                params.len(),
                grads.len()
            )));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        }
        let (m, lr, wd) = (T::of(self.momentum), T::of(lr), T::of(self.weight_decay));
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            if g.shape() != p.shape() {
                return shape_err("Sgd::step", format!("{:?} vs {:?}", g.shape(), p.shape()));
            }
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vv = m * *vv + gv;
                *pv = *pv - lr * *vv - lr * wd * *pv;
            }
        }
        Ok(())
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"PLSCKPT\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Serializes the network: magic, version (u32), the four dims (u64 each),
/// then every parameter in [`Network::params`] order as little-endian f64.
pub fn encode_checkpoint<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let dims = net.dims();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for d in [dims.input, dims.hidden, dims.classes, dims.proj] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for p in net.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Network<T>> {
    let bad = |msg: &str| Error::Parse {
        line: 0,
        msg: format!("checkpoint: {msg}"),
    };
    if bytes.len() < 44 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let dim = |k: usize| u64::from_le_bytes(bytes[12 + 8 * k..20 + 8 * k].try_into().expect("8 bytes")) as usize;
    let dims = Dims::new(dim(0), dim(1), dim(2), dim(3));
    let mut net = Network::<T>::init(dims, 0)?;
    let mut offset = 44;
    for p in net.params_mut() {
        let need = p.len() * 8;
        let chunk = bytes
            .get(offset..offset + need)
            .ok_or_else(|| bad("truncated weights"))?;
        for (v, b) in p.data_mut().iter_mut().zip(chunk.chunks_exact(8)) {
            *v = T::of(f64::from_le_bytes(b.try_into().expect("8 bytes")));
        }
        offset += need;
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(net)
}

pub fn save_checkpoint<T: Scalar>(net: &Network<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(net))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Network<T>> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_input(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
        Tensor::new(rows, cols, data).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let dims = Dims::new(5, 8, 3, 4);
        assert_eq!(Network::<f64>::init(dims, 1).unwrap(), Network::<f64>::init(dims, 1).unwrap());
        assert_ne!(Network::<f64>::init(dims, 1).unwrap(), Network::<f64>::init(dims, 2).unwrap());
        assert!(Network::<f64>::init(Dims::new(5, 0, 3, 4), 1).is_err());
    }

    #[test]
    fn tiny_hidden_layer_still_works() {
        let net = Network::<f64>::init(Dims::new(3, 1, 4, 2), 0).unwrap();
        let (probs, feats) = net.forward_probs(&random_input(6, 3, 0)).unwrap();
        assert_eq!(feats.shape(), (6, 1));
        for r in 0..6 {
            assert!((probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_confidence_is_near_chance() {
        // Monte-Carlo: with small initial logits the mean max-probability
        // stays close to 1/C.
        let c = 5;
        let net = Network::<f64>::init(Dims::new(4, 64, c, 16), 3).unwrap();
        let (probs, _) = net.forward_probs(&random_input(2000, 4, 1)).unwrap();
        let maxes: Vec<f64> = (0..2000).map(|r| probs.row(r).iter().copied().fold(0.0, f64::max)).collect();
        let mean = maxes.iter().sum::<f64>() / 2000.0;
        let sd = (maxes.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 1999.0).sqrt();
        let chance = 1.0 / c as f64;
        assert!(mean >= chance);
        assert!(mean - chance < 3.0 * chance, "mean max-prob {mean} (sd {sd})");
    }

    #[test]
    fn zero_network_is_uniform() {
        let mut net = Network::<f64>::init(Dims::new(3, 4, 4, 2), 0).unwrap();
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let (probs, _) = net.forward_probs(&random_input(3, 3, 0)).unwrap();
        assert!(probs.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn identical_rows_identical_outputs() {
        let net = Network::<f64>::init(Dims::new(3, 8, 3, 2), 4).unwrap();
        let x = Tensor::from_rows(&[[0.3, -1.0, 2.0]; 4]).unwrap();
        let (probs, _) = net.forward_probs(&x).unwrap();
        for r in 1..4 {
            assert_eq!(probs.row(r), probs.row(0));
        }
    }

    #[test]
    fn wrong_input_width_is_shape_error() {
        let net = Network::<f64>::init(Dims::new(3, 8, 3, 2), 4).unwrap();
        assert!(matches!(
            net.forward_probs(&Tensor::zeros(2, 4)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn projection_properties() {
        let net = Network::<f64>::init(Dims::new(3, 8, 3, 5), 4).unwrap();
        let feats = random_input(10, 8, 2).map(f64::abs);
        let emb = net.project(&feats).unwrap();
        for n in emb.row_norms() {
            assert!((n - 1.0).abs() < 1e-9);
        }
        assert!(emb
            .data()
            .iter()
            .zip(net.project(&feats.scale(5.0)).unwrap().data())
            .all(|(a, b)| (a - b).abs() < 1e-12));

        let net1 = Network::<f64>::init(Dims::new(3, 8, 3, 1), 4).unwrap();
        let emb = net1.project(&feats).unwrap();
        assert!(emb.data().iter().all(|v| (v.abs() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn recorded_forward_matches_plain_forward() {
        let net = Network::<f64>::init(Dims::new(4, 6, 3, 2), 8).unwrap();
        let x = random_input(5, 4, 9);
        let mut g = Graph::new();
        let vars = net.bind(&mut g);
        let xv = g.constant(x.clone());
        let (p, f) = vars.forward(&mut g, xv).unwrap();
        let e = vars.project(&mut g, f).unwrap();
        let (p2, f2) = net.forward_probs(&x).unwrap();
        assert_eq!(g.value(p), &p2);
        assert_eq!(g.value(e), &net.project(&f2).unwrap());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Network::<f64>::init(Dims::new(4, 6, 3, 2), 8).unwrap();
        let bytes = encode_checkpoint(&net);
        assert_eq!(&bytes[..8], b"PLSCKPT\0");
        assert_eq!(decode_checkpoint::<f64>(&bytes).unwrap(), net);
        assert!(decode_checkpoint::<f64>(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(decode_checkpoint::<f64>(&bad).is_err());
    }

    #[test]
    fn sgd_momentum_and_decay() {
        let mut net = Network::<f64>::init(Dims::new(1, 1, 1, 1), 0).unwrap();
        for p in net.params_mut() {
            p.data_mut()[0] = 1.0;
        }
        let grads: Vec<Tensor<f64>> = (0..7).map(|_| Tensor::scalar(0.5)).collect();
        let mut opt = Sgd::new(0.9, 0.1);
        opt.step(&mut net, &grads, 0.1).unwrap();
        // v = 0.5; p = 1 - 0.05 - 0.01
        assert!((net.params()[0].data()[0] - 0.94).abs() < 1e-15);
        opt.step(&mut net, &grads, 0.1).unwrap();
        // v = 0.95; p = 0.94 - 0.095 - 0.0094
        assert!((net.params()[0].data()[0] - 0.8356).abs() < 1e-12);
    }
}
