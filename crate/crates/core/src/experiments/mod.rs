//! Desk-scale versions of the adaptation studies: the five-variant
//! taxonomy, forgetting with merge recovery, and multi-domain mixtures.
//! Each runner returns a report whose fields feed the acceptance suite and
//! the examples.

mod shift;
mod taxonomy;

pub use shift::{run_domain_shift, DomainScores, DomainShiftConfig, DomainShiftReport, MixtureArm, ShiftScores};
pub use taxonomy::{run_taxonomy, TaxonomyConfig, TaxonomyReport, VariantScores};

use thiserror::Error;

use crate::corpus::{DomainStream, PairSample};
use crate::model::{ModelConfig, Transformer};
use crate::trainkit::{train, Objective, TrainRecipe};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Train(#[from] crate::trainkit::TrainError),
    #[error(transparent)]
    Eval(#[from] crate::evalkit::EvalError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Weights(#[from] crate::weightops::WeightOpsError),
    #[error("{0}")]
    Setup(String),
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

/// Token budget for synthetic records (up to 32 characters plus BOS).
pub const SEQ_LEN: usize = 40;

/// The desk model used by every experiment.
pub fn desk_model_config() -> ModelConfig {
    ModelConfig {
        max_seq_len: 48,
        ..ModelConfig::desk()
    }
}

/// Causal next-token pretraining, standing in for a pretrained decoder.
pub fn pretrain_base(corpus: &[DomainStream], steps: usize, seed: u64) -> Result<Transformer<f32>> {
    let init = Transformer::new(desk_model_config(), seed)?;
    let recipe = TrainRecipe {
        max_len: SEQ_LEN,
        seed,
        ..TrainRecipe::new(Objective::Clm).with_steps(steps)
    };
    Ok(train(&init, &recipe, corpus)?.model)
}

fn texts(streams: &[DomainStream]) -> Vec<&str> {
    streams.iter().flat_map(|s| s.texts()).collect()
}

fn pairs(streams: &[DomainStream]) -> Vec<PairSample> {
    streams.iter().flat_map(|s| s.pairs().cloned()).collect()
}
