//! A small, self-contained convolutional-network framework whose parameter
//! updates follow a fractional-order gradient rule while the gradients
//! passed between layers stay ordinary first-order chain-rule gradients.
//!
//! The update rescales each raw parameter gradient element-wise by
//! `(|w_now - w_prev| + offset)^(1-alpha) / gamma(2-alpha)` before the
//! learning-rate step. `alpha = 1` reduces the whole framework to plain
//! stochastic gradient descent, which the test suite checks bit-for-bit.

pub mod activation;
pub mod error;
pub mod fracgrad;
pub mod layers;
pub mod loss;
pub mod network;
pub mod tensor;

pub use activation::ActivationKind;
pub use error::{Error, Result};
pub use fracgrad::{
    apply_update, frac_scale, frac_step_scalar, gamma, FirstStepMode, FracGradConfig,
    OptimizerState, TimingMode, DEFAULT_DELTA_OFFSET,
};
pub use layers::{ConvBackend, ConvLayer, DenseLayer, FlattenLayer, PoolKind, PoolLayer};
pub use loss::{loss_gradient, loss_value, softmax_columns, LossKind};
pub use network::{
    build_lenet, lenet_spec, train, InputShape, LabeledImages, LayerSpec, Metrics, Network,
    NetworkSpec, TrainConfig,
};
pub use tensor::Tensor;
