//! Double-precision tensors, a tape-based gradient engine, layers, Adam,
//! and the training loop.

mod checkpoint;
pub mod gradcheck;
mod graph;
mod optim;
mod param;
mod tensor;
mod train;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT};
pub use graph::{BatchStats, Gradients, Graph, Var};
pub use optim::Adam;
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
pub use train::{
    infer, predict, train, train_step, validation_split, write_history, EpochRecord, Forward, Model, TrainConfig,
    TrainItem, TrainOutcome,
};
