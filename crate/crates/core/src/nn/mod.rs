//! Minimal dense neural-network toolkit.
//!
//! Gradients are hand-derived per layer: each forward function returns the
//! intermediate values its backward counterpart needs. The only contract on
//! the backward passes is agreement with central finite differences, which
//! [`gradcheck`] verifies.

pub mod attention;
pub mod checkpoint;
pub mod dropout;
pub mod gradcheck;
pub mod gru;
pub mod linear;
pub mod loss;
pub mod optim;
pub mod rng;
pub mod softmax;
pub mod tensor;

pub use attention::{
    self_attention, self_attention_backward, self_attention_cached, AttentionCache, AttentionParams,
};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use dropout::Dropout;
pub use gradcheck::finite_diff_check;
pub use gru::{gru_step, gru_step_backward, gru_step_cached, GruCache, GruGrads, GruParams};
pub use linear::{linear, linear_backward};
pub use loss::{bce_with_logits, binary_cross_entropy, cross_entropy_softmax, sigmoid};
pub use optim::{adam_step, clip_global_norm, AdamConfig};
pub use rng::SeedStream;
pub use softmax::{softmax_rows, softmax_rows_backward};
pub use tensor::Tensor;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("target index {index} out of range for {classes} classes")]
    TargetOutOfRange { index: usize, classes: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
    pub step_count: u64,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Self {
            value,
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            step_count: 0,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    /// Uniform Glorot initialization over the first and last dims.
    pub fn glorot<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        let fan_in = shape.first().copied().unwrap_or(1);
        let fan_out = shape.last().copied().unwrap_or(1);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self::uniform(shape, bound, rng)
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Self::new(Tensor::from_vec(shape, data).expect("sized by shape"))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }
}
