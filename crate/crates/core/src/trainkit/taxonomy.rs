use serde::{Deserialize, Serialize};

use super::recipe::{Objective, TrainRecipe};
use super::train::{train, LossPoint};
use super::{Result, TrainError};
use crate::corpus::DomainStream;
use crate::model::{AttentionMode, Transformer};

/// The five ways of turning a causal base model into an encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// The causal model as is.
    Base,
    /// Bidirectional attention, no training.
    BiBase,
    BiMntp,
    BiContrastive,
    /// MNTP, then contrastive training.
    BiMntpContrastive,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Base,
        Variant::BiBase,
        Variant::BiMntp,
        Variant::BiContrastive,
        Variant::BiMntpContrastive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "Base",
            Variant::BiBase => "Bi+Base",
            Variant::BiMntp => "Bi+MNTP",
            Variant::BiContrastive => "Bi+Contrastive",
            Variant::BiMntpContrastive => "Bi+MNTP+Contrastive",
        }
    }

    pub fn mode(self) -> AttentionMode {
        match self {
            Variant::Base => AttentionMode::Causal,
            _ => AttentionMode::Bidirectional,
        }
    }

    /// Training phases, in order.
    pub fn phases(self) -> &'static [Objective] {
        match self {
            Variant::Base | Variant::BiBase => &[],
            Variant::BiMntp => &[Objective::Mntp],
            Variant::BiContrastive => &[Objective::Contrastive],
            Variant::BiMntpContrastive => &[Objective::Mntp, Objective::Contrastive],
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub struct TaxonomyInputs<'a> {
    pub base: &'a Transformer<f32>,
    pub mntp: &'a TrainRecipe,
    pub contrastive: &'a TrainRecipe,
    pub text_corpus: &'a [DomainStream],
    pub pair_corpus: &'a [DomainStream],
}

pub struct VariantModel {
    pub variant: Variant,
    pub model: Transformer<f32>,
    pub mode: AttentionMode,
    /// One curve per phase.
    pub curves: Vec<Vec<LossPoint>>,
}

/// Builds the requested variants. The MNTP phase is run once and shared, so
/// the sequential variant starts from exactly the MNTP variant's weights.
pub fn build_variants(inputs: &TaxonomyInputs, variants: &[Variant]) -> Result<Vec<VariantModel>> {
    if inputs.mntp.objective != Objective::Mntp {
        return Err(TrainError::Recipe("MNTP phase needs an mntp recipe".into()));
    }
    if inputs.contrastive.objective != Objective::Contrastive {
        return Err(TrainError::Recipe("contrastive phase needs a contrastive recipe".into()));
    }
    let needs_mntp = variants.iter().any(|v| v.phases().contains(&Objective::Mntp));
    let mntp = if needs_mntp {
        Some(train(inputs.base, inputs.mntp, inputs.text_corpus)?)
    } else {
        None
    };
    variants
        .iter()
        .map(|&variant| {
            let (model, curves) = match variant {
                Variant::Base | Variant::BiBase => (inputs.base.clone(), vec![]),
                Variant::BiMntp => {
                    let m = mntp.as_ref().expect("trained above");
                    (m.model.clone(), vec![m.curve.clone()])
                }
                Variant::BiContrastive => {
                    let c = train(inputs.base, inputs.contrastive, inputs.pair_corpus)?;
                    (c.model, vec![c.curve])
                }
                Variant::BiMntpContrastive => {
                    let m = mntp.as_ref().expect("trained above");
                    let c = train(&m.model, inputs.contrastive, inputs.pair_corpus)?;
                    (c.model, vec![m.curve.clone(), c.curve])
                }
            };
            Ok(VariantModel {
                variant,
                model,
                mode: variant.mode(),
                curves,
            })
        })
        .collect()
}
