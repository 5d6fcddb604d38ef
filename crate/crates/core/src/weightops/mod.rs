//! Training-free weight-space operations: checkpoint files, linear
//! merging, layer-wise similarity and backbone + head composition.

mod checkpoint;
mod compose;
mod merge;
mod similarity;

pub use checkpoint::{
    head_modality, valid_name, Checkpoint, FormatError, StoredTensor, TensorData, CONFIG_KEY, MAGIC,
    METADATA_KEY, VERSION,
};
pub use compose::{compose, HeadSource};
pub use merge::{merge_many, merge_pair, MergeRecipe, WEIGHT_SUM_TOLERANCE};
pub use similarity::{layer_similarity, layer_vector, LayerSimilarity, SimilarityReport, ATTENTION_PARTS, MLP_PARTS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WeightOpsError {
    #[error("{0}")]
    Weights(String),
    #[error("tensor {name:?} is incompatible across inputs: {detail}")]
    Incompatible { name: String, detail: String },
    #[error("structural mismatch: {0}")]
    Structure(String),
    #[error("head namespace {0:?} is provided more than once")]
    HeadCollision(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

pub type Result<T, E = WeightOpsError> = std::result::Result<T, E>;
