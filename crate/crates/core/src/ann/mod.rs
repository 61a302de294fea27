//! Dense ReLU perceptrons: forward pass, SGD training and MNIST ingestion.

mod mlp;
pub mod mnist;
mod train;

pub use mlp::{
    ann_forward, argmax, forward_batch, record_max_activations, ActivationRecord, Architecture,
    DenseLayer, MlpParams,
};
pub use train::{accuracy, ann_train_sgd, loss_and_gradients, Gradients, TrainConfig, TrainReport};
