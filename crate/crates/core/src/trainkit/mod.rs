//! Deterministic training: schedules, AdamW, clipping, batch planning,
//! recipes and the training loop.

mod batches;
mod optim;
mod recipe;
mod schedule;
mod taxonomy;
mod train;

pub use batches::{
    apply_instruction, plan_batches, Batch, BatchPlan, ContrastiveBatch, TextItem, INSTRUCTION_SEPARATOR,
};
pub use optim::{adamw_step, clip_grad_norm, AdamWConfig, ClipReport, GradMap, OptimizerState};
pub use recipe::{Objective, RecipeFile, TrainRecipe};
pub use schedule::{lr_at, ScheduleKind, ScheduleSpec, Warmup};
pub use taxonomy::{build_variants, TaxonomyInputs, Variant, VariantModel};
pub use train::{corpus_supports, read_loss_curve, train, write_loss_curve, LossPoint, TrainOutcome};

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::model::{ModelError, Transformer};
use crate::objectives::ObjectiveError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid recipe: {0}")]
    Recipe(String),
    #[error("invalid batch: {0}")]
    Batch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("non-finite value at step {step}: {what}")]
    NonFinite { step: u64, what: String },
    /// Carries the weights from before the failing update.
    #[error("training diverged at step {step}: {what}")]
    Diverged {
        step: usize,
        what: String,
        last_good: Box<Transformer<f32>>,
        curve: Vec<LossPoint>,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
