//! Dense-network engine: matrices, layers, losses, backpropagation and Adam.

mod adam;
mod loss;
mod matrix;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use loss::{bce_with_logits, mae_loss, softplus};
pub use matrix::Matrix;
pub use mlp::{
    sigmoid, BatchNorm, ForwardCache, Gradients, Layer, LayerGrad, LayerSpec, MlpModel, Mode,
    BATCHNORM_EPS, BATCHNORM_MOMENTUM, DEFAULT_LEAKY_SLOPE,
};
