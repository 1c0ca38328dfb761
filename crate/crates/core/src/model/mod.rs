//! The end-to-end memory network.

pub mod loss;
pub mod network;
pub mod optim;
pub mod params;
pub mod tensor;

pub use network::{argmax, attention, score_candidates, ForwardTrace, Gradients, MaskMode, MaskTrace, Model};
pub use optim::{grad_norm_sq, sgd_step, OptimizerState, Reduction, Step, Trainable};
pub use params::{ModelConfig, ModelParams, RlMaskForm, WeightSharing};
pub use tensor::Matrix;
