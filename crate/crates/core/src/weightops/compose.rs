use std::collections::BTreeSet;

use super::checkpoint::{head_modality, Checkpoint};
use super::merge::{merge_many, MergeRecipe};
use super::{Result, WeightOpsError};

/// A frozen head namespace taken from a checkpoint.
#[derive(Debug, Clone)]
pub struct HeadSource {
    pub checkpoint: Checkpoint,
    pub modality: String,
    /// Recorded in the output metadata.
    pub label: String,
}

/// Merges the `backbone.*` tensors of `backbones` and attaches each head's
/// `head.<modality>.*` tensors unchanged.
pub fn compose(backbones: &MergeRecipe, heads: &[HeadSource]) -> Result<Checkpoint> {
    let mut modalities = BTreeSet::new();
    for h in heads {
        if !modalities.insert(h.modality.as_str()) {
            return Err(WeightOpsError::HeadCollision(h.modality.clone()));
        }
    }
    let only_backbone = MergeRecipe {
        inputs: backbones
            .inputs
            .iter()
            .map(|(c, w)| {
                let mut b = c.clone();
                let heads: Vec<String> = b.names().filter(|n| !n.starts_with("backbone.")).map(String::from).collect();
                for n in heads {
                    b.remove(&n);
                }
                b.metadata.retain(|k, _| !k.starts_with("provenance."));
                (b, *w)
            })
            .collect(),
        scope: None,
    };
    let mut out = merge_many(&only_backbone)?;
    out.metadata.insert(
        "provenance.backbone".into(),
        format!(
            "linear merge of {} backbones, weights [{}]",
            backbones.inputs.len(),
            backbones
                .inputs
                .iter()
                .map(|(_, w)| format!("{w}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
    for h in heads {
        let prefix = format!("head.{}.", h.modality);
        let mut found = 0;
        for (name, t) in h.checkpoint.tensors() {
            if name.starts_with(&prefix) {
                out.insert(name.clone(), t.clone())?;
                found += 1;
            }
        }
        if found == 0 {
            let present: BTreeSet<&str> = h.checkpoint.names().filter_map(head_modality).collect();
            return Err(WeightOpsError::Structure(format!(
                "{} has no `{prefix}*` tensors (heads present: {present:?})",
                h.label
            )));
        }
        out.metadata
            .insert(format!("provenance.head.{}", h.modality), h.label.clone());
    }
    Ok(out)
}
