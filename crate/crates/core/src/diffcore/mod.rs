//! Reverse-mode differentiation, parameters, Adam and learning-rate scheduling.

mod checkpoint;
mod gradcheck;
mod layers;
mod params;
mod schedule;
mod tape;
mod tensor;

pub use checkpoint::{config_hash, Checkpoint};
pub use gradcheck::{check_gradients, relative_error, GradCheckReport};
pub use layers::{insert_block, Ctx, Gru, Linear, Mlp2};
pub use params::{AdamConfig, OptimizerState, ParamId, ParamStore, StoreState};
pub use schedule::{plateau_lr, PlateauConfig, PlateauSchedule};
pub use tape::{log_sigmoid, sigmoid, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NotScalar { shape: [usize; 2] },
    #[error("non-finite value produced by `{op}` (node {node})")]
    NonFinite { op: &'static str, node: usize },
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
