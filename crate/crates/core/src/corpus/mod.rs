//! Domain-tagged record streams: synthetic generation, mixtures,
//! decontamination, deduplication and line-delimited record files.

mod filter;
mod mixture;
mod records;
mod synth;

pub use filter::{decontaminate, dedup_priority, normalize_name, read_list, Blocklist, DecontaminationReport};
pub use mixture::{mix, mix_domains, MixtureSpec};
pub use records::{group_streams, load_records, load_streams_dir, write_records, LoadedRecord, RecordLine};
pub use synth::{
    cipher, edit_distance, synth_corpus, synth_corpus_with, DomainGrammar, SynthKind, SynthOptions, CIPHERED, PLAIN,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no records available for domain {0:?}")]
    EmptyStream(String),
    #[error("invalid mixture: {0}")]
    Mixture(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Pair tasks either prefix only the query or both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TaskSymmetry {
    #[default]
    Asymmetric,
    Symmetric,
}

/// One anchor with its positive and 0–7 hard negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub anchor: String,
    pub positive: String,
    #[serde(default)]
    pub negatives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Text {
        text: String,
        label: Option<String>,
    },
    Pair {
        sample: PairSample,
        /// Graded relevance, used for correlation-style evaluation.
        score: Option<f64>,
        instruction: Option<String>,
        symmetry: TaskSymmetry,
    },
}

impl Record {
    pub fn text(text: impl Into<String>) -> Self {
        Record::Text {
            text: text.into(),
            label: None,
        }
    }

    pub fn pair(sample: PairSample) -> Self {
        Record::Pair {
            sample,
            score: None,
            instruction: None,
            symmetry: TaskSymmetry::Asymmetric,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Record::Text { text, .. } => Some(text),
            Record::Pair { .. } => None,
        }
    }

    pub fn as_pair(&self) -> Option<&PairSample> {
        match self {
            Record::Pair { sample, .. } => Some(sample),
            Record::Text { .. } => None,
        }
    }
}

/// Records from one dataset, tagged with a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainStream {
    domain: String,
    pub provenance: String,
    /// Dataset family used for decontamination and deduplication.
    pub family: String,
    /// Which upstream collection this copy of the family came from.
    pub source: Option<String>,
    pub records: Vec<Record>,
}

impl DomainStream {
    /// `provenance` of the form `family-source` yields both keys; a name
    /// without `-` is a family with no source.
    pub fn new(domain: impl Into<String>, provenance: impl Into<String>, records: Vec<Record>) -> Self {
        let provenance = provenance.into();
        let (family, source) = match provenance.rsplit_once('-') {
            Some((f, s)) if !f.is_empty() && !s.is_empty() => (f.to_string(), Some(s.to_string())),
            _ => (provenance.clone(), None),
        };
        Self {
            domain: domain.into(),
            provenance,
            family,
            source,
            records,
        }
    }

    pub fn with_family(mut self, family: impl Into<String>, source: Option<String>) -> Self {
        self.family = family.into();
        self.source = source;
        self
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().filter_map(Record::as_text)
    }

    pub fn pairs(&self) -> impl Iterator<Item = &PairSample> {
        self.records.iter().filter_map(Record::as_pair)
    }
}

/// Standard domain tags.
pub const ENGLISH: &str = "english";
pub const MULTILINGUAL: &str = "multilingual";
pub const MATH: &str = "math";
pub const CODE: &str = "code";
