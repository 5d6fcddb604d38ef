use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::recipe::{Objective, TrainRecipe};
use super::{Result, TrainError};
use crate::corpus::{mix, mix_domains, CorpusError, DomainStream, MixtureSpec, PairSample, Record, TaskSymmetry};

/// Joins an instruction and a text.
pub const INSTRUCTION_SEPARATOR: &str = " ";

/// Prefixes the anchor (and, for symmetric tasks, the positive). Hard
/// negatives are never prefixed.
pub fn apply_instruction(sample: &PairSample, symmetry: TaskSymmetry, instruction: Option<&str>) -> PairSample {
    let Some(instr) = instruction else {
        return sample.clone();
    };
    let prefix = |s: &str| format!("{instr}{INSTRUCTION_SEPARATOR}{s}");
    PairSample {
        anchor: prefix(&sample.anchor),
        positive: match symmetry {
            TaskSymmetry::Symmetric => prefix(&sample.positive),
            TaskSymmetry::Asymmetric => sample.positive.clone(),
        },
        negatives: sample.negatives.clone(),
    }
}

/// Pair samples from a single domain, sharing one symmetry and instruction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastiveBatch {
    samples: Vec<PairSample>,
    domain: String,
    symmetry: TaskSymmetry,
    instruction: Option<String>,
}

impl ContrastiveBatch {
    pub const MAX_HARD_NEGATIVES: usize = 7;

    pub fn new(
        samples: Vec<PairSample>,
        domain: impl Into<String>,
        symmetry: TaskSymmetry,
        instruction: Option<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(TrainError::Batch("empty contrastive batch".into()));
        }
        if let Some(s) = samples.iter().find(|s| s.negatives.len() > Self::MAX_HARD_NEGATIVES) {
            return Err(TrainError::Batch(format!(
                "{} hard negatives on one sample (at most {})",
                s.negatives.len(),
                Self::MAX_HARD_NEGATIVES
            )));
        }
        if instruction.as_deref() == Some("") {
            return Err(TrainError::Batch("empty instruction".into()));
        }
        Ok(Self {
            samples,
            domain: domain.into(),
            symmetry,
            instruction,
        })
    }

    pub fn samples(&self) -> &[PairSample] {
        &self.samples
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn symmetry(&self) -> TaskSymmetry {
        self.symmetry
    }

    pub fn instruction(&self) -> Option<&str> {
        self.instruction.as_deref()
    }

    /// Samples with the instruction applied.
    pub fn prefixed(&self) -> Vec<PairSample> {
        self.samples
            .iter()
            .map(|s| apply_instruction(s, self.symmetry, self.instruction()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TextItem {
    pub domain: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Batch {
    Text(Vec<TextItem>),
    Contrastive(ContrastiveBatch),
}

/// The ordered batches of a run and a SHA-256 over their contents.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub batches: Vec<Batch>,
    pub fingerprint: String,
}

fn fingerprint(batches: &[Batch]) -> String {
    let mut h = Sha256::new();
    for b in batches {
        h.update(serde_json::to_vec(b).expect("batches serialize"));
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Uniform over every domain that has text, in first-seen order.
fn default_mixture(streams: &[DomainStream]) -> Result<MixtureSpec> {
    let mut domains: Vec<&str> = Vec::new();
    for s in streams {
        if s.texts().next().is_some() && !domains.contains(&s.domain()) {
            domains.push(s.domain());
        }
    }
    let Some((&first, rest)) = domains.split_first() else {
        return Err(CorpusError::Invalid("no text records in the corpus".into()).into());
    };
    let ratio = rest.len() as f64 / domains.len() as f64;
    Ok(MixtureSpec::new(first, ratio, rest)?)
}

/// Orders the data of a run: `steps × grad_accum` batches of
/// `batch_size`. Text batches follow the recipe's mixture (uniform over
/// domains by default); each contrastive batch comes from one stream.
/// With a mixture, the batch's domain is drawn from it and the stream
/// within that domain proportional to size; otherwise the stream is chosen
/// proportional to size over the whole corpus.
pub fn plan_batches(streams: &[DomainStream], recipe: &TrainRecipe, seed: u64) -> Result<BatchPlan> {
    let n_batches = recipe.steps * recipe.grad_accum;
    let batches = match recipe.objective {
        Objective::Contrastive => {
            plan_contrastive(streams, recipe.mixture.as_ref(), recipe.batch_size, n_batches, seed)?
        }
        _ => {
            let spec = match &recipe.mixture {
                Some(m) => m.clone(),
                None => default_mixture(streams)?,
            };
            let picks = mix(&spec, streams, n_batches * recipe.batch_size, seed)?;
            picks
                .chunks(recipe.batch_size.max(1))
                .map(|chunk| {
                    Batch::Text(
                        chunk
                            .iter()
                            .map(|&(s, r)| TextItem {
                                domain: streams[s].domain().to_string(),
                                text: streams[s].records[r].as_text().expect("mix picks text").to_string(),
                            })
                            .collect(),
                    )
                })
                .collect()
        }
    };
    Ok(BatchPlan {
        fingerprint: fingerprint(&batches),
        batches,
    })
}

fn plan_contrastive(
    streams: &[DomainStream],
    mixture: Option<&MixtureSpec>,
    batch_size: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    let sources: Vec<(usize, Vec<usize>)> = streams
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let idx = s
                .records
                .iter()
                .enumerate()
                .filter(|(_, r)| r.as_pair().is_some())
                .map(|(j, _)| j)
                .collect::<Vec<_>>();
            (i, idx)
        })
        .filter(|(_, idx)| !idx.is_empty())
        .collect();
    if sources.is_empty() {
        return Err(CorpusError::Invalid("no pair records in the corpus".into()).into());
    }
    // per batch: the indices into `sources` it may be drawn from
    let candidates: Vec<Vec<usize>> = match mixture {
        None => vec![(0..sources.len()).collect(); n],
        Some(spec) => {
            let by_slot: Vec<Vec<usize>> = spec
                .domains()
                .into_iter()
                .zip(spec.shares())
                .map(|(d, share)| {
                    let ks: Vec<usize> = (0..sources.len())
                        .filter(|&k| streams[sources[k].0].domain() == d)
                        .collect();
                    if ks.is_empty() && share > 0.0 {
                        Err(CorpusError::EmptyStream(d.to_string()))
                    } else {
                        Ok(ks)
                    }
                })
                .collect::<std::result::Result<_, _>>()?;
            mix_domains(spec, n, seed ^ 0x5bd1_e995)?
                .into_iter()
                .map(|slot| by_slot[slot].clone())
                .collect()
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orders: Vec<Vec<usize>> = sources.iter().map(|(_, idx)| idx.clone()).collect();
    for o in orders.iter_mut() {
        o.shuffle(&mut rng);
    }
    let mut cursor = vec![0usize; sources.len()];
    let mut out = Vec::with_capacity(n);
    for allowed in &candidates {
        let total: usize = allowed.iter().map(|&k| sources[k].1.len()).sum();
        let mut pick = rng.random_range(0..total);
        let k = *allowed
            .iter()
            .find(|&&k| {
                let len = sources[k].1.len();
                if pick < len {
                    true
                } else {
                    pick -= len;
                    false
                }
            })
            .expect("pick < total");
        let stream = &streams[sources[k].0];
        let size = batch_size.min(orders[k].len());
        // a batch never wraps around, so no record appears twice in it
        if cursor[k] + size > orders[k].len() {
            orders[k].shuffle(&mut rng);
            cursor[k] = 0;
        }
        let records: Vec<&Record> = orders[k][cursor[k]..cursor[k] + size]
            .iter()
            .map(|&j| &stream.records[j])
            .collect();
        cursor[k] += size;
        let (symmetry, instruction) = match records[0] {
            Record::Pair {
                symmetry, instruction, ..
            } => (*symmetry, instruction.clone()),
            Record::Text { .. } => unreachable!("only pair records are planned"),
        };
        let samples = records.iter().filter_map(|r| r.as_pair().cloned()).collect();
        out.push(Batch::Contrastive(ContrastiveBatch::new(
            samples,
            stream.domain(),
            symmetry,
            instruction,
        )?));
    }
    Ok(out)
}
