//! Label-noise robust classifier training by two-stage detection.
//!
//! Stage one separates clean from noisy samples with a two-component
//! Gaussian mixture fitted to the per-sample training loss. Stage two guesses
//! labels for the noisy samples, scores each guess by its pseudo-loss and
//! turns a second mixture posterior into a per-sample confidence weight `w`.
//! The weight scales the mixup cross-entropy and interpolates the contrastive
//! target between class-level (supervised) and instance-level (unsupervised)
//! positives.
//!
//! Numeric code is generic over [`Scalar`] (`f32`, `f64`); the aliases below
//! fix it to `f64`, which is what the command-line tool and the tests use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod gmm;
pub mod metrics;
pub mod model;
pub mod pls;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type Graph = tensor::Graph<f64>;
pub type GmmFit = gmm::GmmFit<f64>;
pub type MlpClassifier = model::MlpClassifier<f64>;
pub type ProjectionHead = model::ProjectionHead<f64>;
pub type Network = model::Network<f64>;
pub type Trainer = pls::Trainer<f64>;
