//! Parameters, differentiable primitives, losses, Adam and training.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod ops;
pub mod param;
pub mod train;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use loss::Loss;
pub use ops::Activation;
pub use param::ParamTensor;
pub use train::{
    argmax_rows, evaluate_loss, forward_backward, train, Differentiable, History, Prediction,
    TrainConfig, TrainData, Targets,
};
