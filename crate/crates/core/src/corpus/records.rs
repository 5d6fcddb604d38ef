//! Line-delimited JSON record files.
//!
//! One object per line. Text records carry `text`; pair records carry
//! `anchor`, `positive` and optionally `negatives`. Both carry `domain` and
//! `provenance`; `label`, `score`, `instruction`, `symmetry`, `family` and
//! `source` are optional.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, DomainStream, PairSample, Record, Result, TaskSymmetry};

/// Wire form of one record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negatives: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<TaskSymmetry>,
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl RecordLine {
    fn into_record(self) -> std::result::Result<Record, String> {
        match (self.text, self.anchor, self.positive) {
            (Some(text), None, None) => {
                if text.is_empty() {
                    return Err("empty text".into());
                }
                Ok(Record::Text {
                    text,
                    label: self.label,
                })
            }
            (None, Some(anchor), Some(positive)) => {
                let negatives = self.negatives.unwrap_or_default();
                if anchor.is_empty() || positive.is_empty() {
                    return Err("empty anchor or positive".into());
                }
                if negatives.len() > 7 {
                    return Err(format!("{} hard negatives (at most 7)", negatives.len()));
                }
                if self.instruction.as_deref() == Some("") {
                    return Err("empty instruction".into());
                }
                Ok(Record::Pair {
                    sample: PairSample {
                        anchor,
                        positive,
                        negatives,
                    },
                    score: self.score,
                    instruction: self.instruction,
                    symmetry: self.symmetry.unwrap_or_default(),
                })
            }
            (Some(_), _, _) => Err("a record has either `text` or `anchor`/`positive`, not both".into()),
            _ => Err("missing `text` or `anchor`/`positive`".into()),
        }
    }

    fn from_record(stream: &DomainStream, record: &Record) -> Self {
        let mut line = RecordLine {
            domain: stream.domain().to_string(),
            provenance: Some(stream.provenance.clone()),
            ..Default::default()
        };
        let derived = DomainStream::new("", stream.provenance.clone(), vec![]);
        if derived.family != stream.family || derived.source != stream.source {
            line.family = Some(stream.family.clone());
            line.source = stream.source.clone();
        }
        match record {
            Record::Text { text, label } => {
                line.text = Some(text.clone());
                line.label = label.clone();
            }
            Record::Pair {
                sample,
                score,
                instruction,
                symmetry,
            } => {
                line.anchor = Some(sample.anchor.clone());
                line.positive = Some(sample.positive.clone());
                if !sample.negatives.is_empty() {
                    line.negatives = Some(sample.negatives.clone());
                }
                line.score = *score;
                line.instruction = instruction.clone();
                if *symmetry != TaskSymmetry::Asymmetric {
                    line.symmetry = Some(*symmetry);
                }
            }
        }
        line
    }
}

/// A parsed record with its 1-based source line.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRecord {
    pub line: usize,
    pub domain: String,
    pub provenance: String,
    pub family: Option<String>,
    pub source: Option<String>,
    pub record: Record,
}

/// Parses a record file. Blank lines are skipped; any malformed line fails
/// the whole load with its line number.
pub fn load_records(path: &Path) -> Result<Vec<LoadedRecord>> {
    let shown = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: shown.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed {
            path: shown.clone(),
            line: lineno,
            message,
        };
        let parsed: RecordLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if parsed.domain.trim().is_empty() {
            return Err(malformed("empty domain".into()));
        }
        let domain = parsed.domain.clone();
        let provenance = parsed.provenance.clone().unwrap_or_else(|| domain.clone());
        let family = parsed.family.clone();
        let source = parsed.source.clone();
        let record = parsed.into_record().map_err(malformed)?;
        out.push(LoadedRecord {
            line: lineno,
            domain,
            provenance,
            family,
            source,
            record,
        });
    }
    Ok(out)
}

/// Groups records by `(domain, provenance)` in first-seen order.
pub fn group_streams(records: Vec<LoadedRecord>) -> Vec<DomainStream> {
    let mut streams: Vec<DomainStream> = Vec::new();
    for r in records {
        let idx = streams
            .iter()
            .position(|s| s.domain() == r.domain && s.provenance == r.provenance);
        let idx = match idx {
            Some(i) => i,
            None => {
                let mut s = DomainStream::new(r.domain.clone(), r.provenance.clone(), vec![]);
                if let Some(f) = &r.family {
                    s = s.with_family(f.clone(), r.source.clone());
                }
                streams.push(s);
                streams.len() - 1
            }
        };
        streams[idx].records.push(r.record);
    }
    streams
}

/// Loads every `*.jsonl` file of a directory, in file-name order.
pub fn load_streams_dir(dir: &Path) -> Result<Vec<DomainStream>> {
    let entries = std::fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut files: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut all = Vec::new();
    for f in files {
        all.extend(load_records(&f)?);
    }
    Ok(group_streams(all))
}

pub fn write_records(path: &Path, streams: &[DomainStream]) -> Result<()> {
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    for s in streams {
        for r in &s.records {
            let line = serde_json::to_string(&RecordLine::from_record(s, r))
                .map_err(|e| CorpusError::Invalid(e.to_string()))?;
            writeln!(w, "{line}").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
