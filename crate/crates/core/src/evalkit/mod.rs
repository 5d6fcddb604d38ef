//! Metrics, model probes and average normalized rank aggregation.

mod metrics;
mod probes;
mod rank;

pub use metrics::{accuracy, average_ranks, ema, macro_f1, ndcg_at_k, spearman, Ndcg, EMA_ALPHA};
pub use probes::{masked_probe, retrieval_eval, MaskedProbe, RetrievalReport};
pub use rank::{normalized_rank, read_records, write_records, EvalRecord, RankTable};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Invalid(String),
    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {detail}")]
    Malformed { path: String, line: usize, detail: String },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Objective(#[from] crate::objectives::ObjectiveError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
