//! Maps an in-domain encoder's embeddings into the conditioning encoder's
//! space with a small MLP trained by hand-written backpropagation.

mod mlp;
mod templates;
mod train;

pub use mlp::{
    loss_and_grad, mean_squared_error, project, project_rows, ForwardTrace, ProjectionDims, ProjectionMlp,
    LAYER_NORM_EPS,
};
pub use templates::{expand_prompt_templates, PromptFamily, TemplateConfig};
pub use train::{
    align_pairs, load_projection, train_from, loss_trace_csv, save_projection, train_projection, AlignedPairs, LossPoint,
    ProjectionCheckpoint, ProjectionMode, ProjectionTrainConfig, TrainedProjection,
};

use crate::bench::BenchError;
use crate::checkpoint::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum ProjectionError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("no usable source/target pairs")]
    NoPairs,
    #[error("source and target lists differ in length ({source_len} vs {target_len})")]
    UnpairedInputs { source_len: usize, target_len: usize },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("non-finite parameters")]
    NonFiniteParameters,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no concepts to expand")]
    NoConcepts,
    #[error(transparent)]
    Extraction(#[from] BenchError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl ProjectionError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, ProjectionError::NonFiniteLoss { .. } | ProjectionError::NonFiniteParameters)
    }
}
