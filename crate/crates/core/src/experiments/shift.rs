use std::time::{Duration, Instant};

use serde::Serialize;

use super::{pairs, pretrain_base, ExperimentError, Result, SEQ_LEN};
use crate::corpus::{synth_corpus, MixtureSpec, PairSample, SynthKind};
use crate::evalkit::retrieval_eval;
use crate::model::{AttentionMode, PoolingStrategy, Transformer};
use crate::trainkit::{train, Objective, TrainRecipe};
use crate::weightops::{merge_pair, Checkpoint};

/// Train on domain A, then keep adapting on domain B.
#[derive(Debug, Clone)]
pub struct DomainShiftConfig {
    pub domain_a: String,
    pub domain_b: String,
    pub train_size: usize,
    pub eval_size: usize,
    pub base_steps: usize,
    /// Contrastive steps on domain A.
    pub pre_steps: usize,
    /// Domain-B budgets tried in order; the first that costs domain A at
    /// least `min_drop` NDCG@10 is kept.
    pub adapt_budgets: Vec<usize>,
    pub adapt_lr: f64,
    pub min_drop: f64,
    /// Weight of the pre-adaptation checkpoint in the merge.
    pub merge_base_ratio: f64,
    /// Shares of domain A mixed into the domain-B run.
    pub mixture_ratios: Vec<f64>,
    pub retrieval_group: usize,
    pub seed: u64,
}

impl Default for DomainShiftConfig {
    fn default() -> Self {
        Self {
            domain_a: "english".into(),
            domain_b: "math".into(),
            train_size: 200,
            eval_size: 80,
            base_steps: 200,
            pre_steps: 300,
            adapt_budgets: vec![100, 200, 400],
            adapt_lr: 1e-3,
            min_drop: 0.10,
            merge_base_ratio: 0.5,
            mixture_ratios: vec![0.0, 0.2],
            retrieval_group: 16,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftScores {
    pub accuracy: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DomainScores {
    pub a: ShiftScores,
    pub b: ShiftScores,
}

#[derive(Debug, Clone, Serialize)]
pub struct MixtureArm {
    pub ratio: f64,
    pub scores: DomainScores,
}

impl MixtureArm {
    /// Domain-A NDCG@10 kept relative to the pre-adaptation model.
    pub fn retention(&self, pre: &DomainScores) -> f64 {
        self.scores.a.ndcg / pre.a.ndcg
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainShiftReport {
    pub pre: DomainScores,
    pub adapted: DomainScores,
    pub merged: DomainScores,
    pub adapt_steps: usize,
    pub mixture: Vec<MixtureArm>,
    pub elapsed: Duration,
}

impl DomainShiftReport {
    /// Domain-A NDCG@10 lost to adaptation.
    pub fn drop(&self) -> f64 {
        self.pre.a.ndcg - self.adapted.a.ndcg
    }

    /// Share of the domain-A drop won back by merging.
    pub fn recovery(&self) -> f64 {
        (self.merged.a.ndcg - self.adapted.a.ndcg) / self.drop()
    }

    /// Share of the domain-B gain kept after merging.
    pub fn retention(&self) -> f64 {
        (self.merged.b.ndcg - self.pre.b.ndcg) / (self.adapted.b.ndcg - self.pre.b.ndcg)
    }

    pub fn arm(&self, ratio: f64) -> Option<&MixtureArm> {
        self.mixture.iter().find(|m| m.ratio == ratio)
    }
}

struct Held {
    a: Vec<PairSample>,
    b: Vec<PairSample>,
}

fn score(model: &Transformer<f32>, held: &Held, group: usize) -> Result<DomainScores> {
    let mode = AttentionMode::Bidirectional;
    let one = |p: &[PairSample]| -> Result<ShiftScores> {
        let r = retrieval_eval(model, p, mode, PoolingStrategy::default_for(mode), group, SEQ_LEN)?;
        Ok(ShiftScores {
            accuracy: r.accuracy,
            ndcg: r.ndcg_at_10,
        })
    };
    Ok(DomainScores {
        a: one(&held.a)?,
        b: one(&held.b)?,
    })
}

/// Runs the forgetting, merge-recovery and mixture-retention arms from one
/// shared domain-A model.
pub fn run_domain_shift(cfg: &DomainShiftConfig) -> Result<DomainShiftReport> {
    let start = Instant::now();
    let (a, b) = (cfg.domain_a.as_str(), cfg.domain_b.as_str());
    if a == b {
        return Err(ExperimentError::Setup("domains A and B must differ".into()));
    }
    let text = synth_corpus(SynthKind::Masking, &[a, b], cfg.train_size, cfg.seed)?;
    let corpus = synth_corpus(SynthKind::Contrastive, &[a, b], cfg.train_size, cfg.seed + 1)?;
    let held = Held {
        a: pairs(&synth_corpus(SynthKind::Contrastive, &[a], cfg.eval_size, cfg.seed + 1000)?),
        b: pairs(&synth_corpus(SynthKind::Contrastive, &[b], cfg.eval_size, cfg.seed + 1001)?),
    };
    let base = pretrain_base(&text, cfg.base_steps, cfg.seed)?;

    let recipe = |steps: usize, mixture: MixtureSpec, lr: Option<f64>| {
        let mut r = TrainRecipe {
            max_len: SEQ_LEN,
            seed: cfg.seed,
            mixture: Some(mixture),
            ..TrainRecipe::new(Objective::Contrastive).with_steps(steps)
        };
        if let Some(lr) = lr {
            r.schedule.peak_lr = lr;
        }
        r
    };
    let pre_model = train(&base, &recipe(cfg.pre_steps, MixtureSpec::pure(a), None), &corpus)?.model;
    let pre = score(&pre_model, &held, cfg.retrieval_group)?;
    log::info!("domain-A model ready in {:?}: {pre:?}", start.elapsed());

    let mut chosen = None;
    for &steps in &cfg.adapt_budgets {
        let model = train(&pre_model, &recipe(steps, MixtureSpec::pure(b), Some(cfg.adapt_lr)), &corpus)?.model;
        let scores = score(&model, &held, cfg.retrieval_group)?;
        log::info!("adapted {steps} steps: {scores:?}");
        let done = pre.a.ndcg - scores.a.ndcg >= cfg.min_drop;
        chosen = Some((steps, model, scores));
        if done {
            break;
        }
    }
    let (adapt_steps, adapted_model, adapted) =
        chosen.ok_or_else(|| ExperimentError::Setup("no adaptation budgets given".into()))?;

    let merged_model = merge_pair(
        &Checkpoint::from_model(&adapted_model),
        &Checkpoint::from_model(&pre_model),
        cfg.merge_base_ratio,
    )?
    .to_model::<f32>()?;
    let merged = score(&merged_model, &held, cfg.retrieval_group)?;

    let mut mixture = Vec::new();
    for &ratio in &cfg.mixture_ratios {
        let scores = if ratio == 0.0 {
            adapted
        } else {
            let spec = MixtureSpec::new(b, ratio, &[a])?;
            let m = train(&pre_model, &recipe(adapt_steps, spec, Some(cfg.adapt_lr)), &corpus)?.model;
            score(&m, &held, cfg.retrieval_group)?
        };
        mixture.push(MixtureArm { ratio, scores });
    }
    Ok(DomainShiftReport {
        pre,
        adapted,
        merged,
        adapt_steps,
        mixture,
        elapsed: start.elapsed(),
    })
}
