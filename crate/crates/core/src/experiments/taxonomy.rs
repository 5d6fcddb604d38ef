use std::time::{Duration, Instant};

use serde::Serialize;

use super::{pairs, pretrain_base, texts, Result, SEQ_LEN};
use crate::corpus::{synth_corpus, PairSample, SynthKind};
use crate::evalkit::{masked_probe, normalized_rank, retrieval_eval, EvalRecord, RankTable};
use crate::model::PoolingStrategy;
use crate::objectives::MaskedObjective;
use crate::trainkit::{build_variants, Objective, TaxonomyInputs, TrainRecipe, Variant};

#[derive(Debug, Clone)]
pub struct TaxonomyConfig {
    pub domains: Vec<String>,
    /// Training records per domain.
    pub train_size: usize,
    /// Held-out records per domain.
    pub eval_size: usize,
    pub base_steps: usize,
    pub mntp_steps: usize,
    pub contrastive_steps: usize,
    pub contrastive_batch: usize,
    /// Mask ratio of the held-out masked-prediction probe.
    pub probe_mask_ratio: f64,
    /// Queries per retrieval group.
    pub retrieval_group: usize,
    pub seed: u64,
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        Self {
            domains: vec!["english".into(), "code".into()],
            train_size: 200,
            eval_size: 48,
            base_steps: 200,
            mntp_steps: 400,
            contrastive_steps: 300,
            contrastive_batch: 16,
            probe_mask_ratio: 0.2,
            retrieval_group: 16,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantScores {
    pub variant: String,
    /// Held-out masked next-token loss per token, all domains pooled.
    pub probe_loss: f64,
    /// Held-out top-1 retrieval accuracy, all domains pooled.
    pub retrieval_accuracy: f64,
    pub retrieval_ndcg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaxonomyReport {
    pub variants: Vec<VariantScores>,
    /// Per-domain masked and retrieval tasks over all five variants.
    pub ranks: RankTable,
    pub elapsed: Duration,
}

impl TaxonomyReport {
    pub fn scores(&self, v: Variant) -> &VariantScores {
        self.variants
            .iter()
            .find(|s| s.variant == v.name())
            .expect("every variant is scored")
    }

    /// Relative probe-loss reduction of Bi+MNTP over Bi+Base.
    pub fn mntp_gain(&self) -> f64 {
        let base = self.scores(Variant::BiBase).probe_loss;
        (base - self.scores(Variant::BiMntp).probe_loss) / base
    }

    pub fn mean_rank(&self, v: Variant) -> f64 {
        self.ranks.mean_rank(v.name()).expect("every variant is ranked")
    }
}

/// Pretrains a causal base, builds the five variants and scores them on
/// held-out masked prediction and retrieval.
pub fn run_taxonomy(cfg: &TaxonomyConfig) -> Result<TaxonomyReport> {
    let start = Instant::now();
    let domains: Vec<&str> = cfg.domains.iter().map(String::as_str).collect();
    let text = synth_corpus(SynthKind::Masking, &domains, cfg.train_size, cfg.seed)?;
    let pair_corpus = synth_corpus(SynthKind::Contrastive, &domains, cfg.train_size, cfg.seed + 1)?;
    let held_text = synth_corpus(SynthKind::Masking, &domains, cfg.eval_size, cfg.seed + 1000)?;
    let held_pairs = synth_corpus(SynthKind::Contrastive, &domains, cfg.eval_size, cfg.seed + 1001)?;

    let base = pretrain_base(&text, cfg.base_steps, cfg.seed)?;
    log::info!("base pretrained in {:?}", start.elapsed());
    let mntp = TrainRecipe {
        max_len: SEQ_LEN,
        seed: cfg.seed,
        ..TrainRecipe::new(Objective::Mntp).with_steps(cfg.mntp_steps)
    };
    let contrastive = TrainRecipe {
        max_len: SEQ_LEN,
        seed: cfg.seed,
        batch_size: cfg.contrastive_batch,
        ..TrainRecipe::new(Objective::Contrastive).with_steps(cfg.contrastive_steps)
    };
    let models = build_variants(
        &TaxonomyInputs {
            base: &base,
            mntp: &mntp,
            contrastive: &contrastive,
            text_corpus: &text,
            pair_corpus: &pair_corpus,
        },
        &Variant::ALL,
    )?;
    log::info!("variants trained in {:?}", start.elapsed());

    let mut variants = Vec::new();
    let mut records = Vec::new();
    for vm in &models {
        let pooling = PoolingStrategy::default_for(vm.mode);
        let probe = |t: &[&str]| {
            masked_probe(&vm.model, t, MaskedObjective::Mntp, vm.mode, cfg.probe_mask_ratio, cfg.seed, SEQ_LEN)
        };
        let retrieve =
            |p: &[PairSample]| retrieval_eval(&vm.model, p, vm.mode, pooling, cfg.retrieval_group, SEQ_LEN);
        let pooled = retrieve(&pairs(&held_pairs))?;
        variants.push(VariantScores {
            variant: vm.variant.name().into(),
            probe_loss: probe(&texts(&held_text))?.mean_loss,
            retrieval_accuracy: pooled.accuracy,
            retrieval_ndcg: pooled.ndcg_at_10,
        });
        for (t, p) in held_text.iter().zip(&held_pairs) {
            let name = vm.variant.name();
            let loss = probe(&t.texts().collect::<Vec<_>>())?.mean_loss;
            records.push(EvalRecord {
                metric: Some("neg-mntp-loss".into()),
                ..EvalRecord::new(format!("masked/{}", t.domain()), name, -loss)
            });
            let r = retrieve(&p.pairs().cloned().collect::<Vec<_>>())?;
            records.push(EvalRecord {
                metric: Some("accuracy".into()),
                ..EvalRecord::new(format!("retrieval/{}", p.domain()), name, r.accuracy)
            });
        }
    }
    Ok(TaxonomyReport {
        variants,
        ranks: normalized_rank(&records)?,
        elapsed: start.elapsed(),
    })
}
