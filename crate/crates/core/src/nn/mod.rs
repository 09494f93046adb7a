//! Hand-rolled deep feedforward classifier with a softmax output layer.

pub mod adam;
pub mod network;
pub mod ops;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use network::{
    backward, forward, init_network, Activation, Dense, Forward, Gradients, Mode, NetworkSpec,
    NormGrad, Parameters, Trace,
};
pub use ops::{
    affine, batchnorm_forward, cross_entropy, dropout_forward, mse_loss, relu, sigmoid, softmax,
    BatchNorm, Phase,
};
pub use train::{predict, train, NetworkModel, TrainingConfig, TrainingHistory};
