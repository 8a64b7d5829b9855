//! Text-encoder benchmarking: embedding extraction strategies, CheXpert@k
//! retrieval agreement, the bag-of-words IoU baseline and 2-D projections
//! for cluster plots.

mod bow;
mod chexpert;
mod embed2d;
mod tables;
mod tensor_io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Matrix;

pub use bow::{bow_iou_similarity, bow_similarity_matrix, bow_tokens};
pub use chexpert::{
    chexpert_at_k, chexpert_from_similarity, chexpert_per_class, chexpert_per_class_from_similarity,
    dot_similarity_matrix, run_bow_benchmark, run_encoder_benchmark, BenchmarkResult, ChexpertScores, ClassScores,
    LabelMode,
};
pub use embed2d::{embed_2d, Embed2dConfig, Embed2dMethod, Embedding2d};
pub use tables::{table_per_class_csv, table_strategies_csv, BenchmarkTables, BOW_ENCODER_ID};
pub use tensor_io::{read_encoder_outputs, write_encoder_outputs, EncoderRecord};

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("strategy {strategy:?} unavailable for encoder {encoder_id}")]
    StrategyUnavailable { strategy: ExtractionStrategy, encoder_id: String },
    #[error("k = {k} must satisfy 1 <= k <= N - 1 with N = {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("{what}: expected {expected}, got {got}")]
    DimMismatch { what: &'static str, expected: usize, got: usize },
    #[error("no encoder output for report {0:?}")]
    MissingOutput(String),
    #[error("encoder output {0:?}: T must be at least 1")]
    EmptySequence(String),
    #[error("{locus}: {message}")]
    Format { locus: String, message: String },
}

/// Per-token hidden states plus optional pooled and model-specific vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderOutput {
    pub token_states: Matrix,
    pub pooled: Option<Vec<f64>>,
    pub model_specific: Option<Vec<f64>>,
    pub encoder_id: String,
}

impl EncoderOutput {
    pub fn new(encoder_id: impl Into<String>, token_states: Matrix) -> Self {
        EncoderOutput { token_states, pooled: None, model_specific: None, encoder_id: encoder_id.into() }
    }

    pub fn dim(&self) -> usize {
        self.token_states.cols()
    }

    pub fn len(&self) -> usize {
        self.token_states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How a document-level vector is read off an encoder output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionStrategy {
    ClsHiddenState,
    MeanHiddenStates,
    PoolerOutput,
    ModelSpecific,
}

impl ExtractionStrategy {
    pub const ALL: [ExtractionStrategy; 4] = [
        ExtractionStrategy::ClsHiddenState,
        ExtractionStrategy::MeanHiddenStates,
        ExtractionStrategy::PoolerOutput,
        ExtractionStrategy::ModelSpecific,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExtractionStrategy::ClsHiddenState => "cls_hidden_state",
            ExtractionStrategy::MeanHiddenStates => "mean_hidden_states",
            ExtractionStrategy::PoolerOutput => "pooler_output",
            ExtractionStrategy::ModelSpecific => "model_specific",
        }
    }
}

pub fn extract_embedding(out: &EncoderOutput, strategy: ExtractionStrategy) -> Result<Vec<f64>, BenchError> {
    let unavailable = || BenchError::StrategyUnavailable { strategy, encoder_id: out.encoder_id.clone() };
    match strategy {
        ExtractionStrategy::ClsHiddenState => {
            if out.is_empty() {
                return Err(BenchError::EmptySequence(out.encoder_id.clone()));
            }
            Ok(out.token_states.row(0).to_vec())
        }
        ExtractionStrategy::MeanHiddenStates => {
            if out.is_empty() {
                return Err(BenchError::EmptySequence(out.encoder_id.clone()));
            }
            Ok(out.token_states.column_mean())
        }
        ExtractionStrategy::PoolerOutput => out.pooled.clone().ok_or_else(unavailable),
        ExtractionStrategy::ModelSpecific => out.model_specific.clone().ok_or_else(unavailable),
    }
}
