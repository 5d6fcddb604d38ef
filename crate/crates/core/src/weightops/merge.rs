use std::collections::BTreeSet;

use super::checkpoint::{Checkpoint, StoredTensor};
use super::{Result, WeightOpsError};

/// Tolerance on the sum of merge weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Weighted checkpoints plus an optional name-prefix scope.
#[derive(Debug, Clone)]
pub struct MergeRecipe {
    pub inputs: Vec<(Checkpoint, f64)>,
    /// Only names starting with this prefix are merged; `None` merges every
    /// shared name.
    pub scope: Option<String>,
}

impl MergeRecipe {
    pub fn new(inputs: Vec<(Checkpoint, f64)>) -> Self {
        Self { inputs, scope: None }
    }

    /// Equal weights `1/n`.
    pub fn equal(checkpoints: Vec<Checkpoint>) -> Self {
        let w = 1.0 / checkpoints.len().max(1) as f64;
        Self::new(checkpoints.into_iter().map(|c| (c, w)).collect())
    }

    pub fn with_scope(mut self, prefix: impl Into<String>) -> Self {
        self.scope = Some(prefix.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(WeightOpsError::Weights("no inputs to merge".into()));
        }
        if let Some(&(_, w)) = self.inputs.iter().find(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(WeightOpsError::Weights(format!("weight {w} is negative or not finite")));
        }
        let sum: f64 = self.inputs.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(WeightOpsError::Weights(format!("weights must sum to 1 (got {sum})")));
        }
        Ok(())
    }

    fn in_scope(&self, name: &str) -> bool {
        self.scope.as_deref().is_none_or(|p| name.starts_with(p))
    }
}

/// Convex combination of same-shape value vectors, accumulated in `f64`.
///
/// Computed per element as `x_ref + Σ w_i (x_i − x_ref)` around the
/// heaviest input (the smallest value among equally heavy ones), so
/// identical inputs and one-hot weights reproduce their input exactly,
/// zero-weight inputs never contribute, and the result does not depend on
/// the order of equally weighted inputs.
fn combine(values: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let top = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let heaviest: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] == top).collect();
    (0..values[0].len())
        .map(|j| {
            let r = *heaviest
                .iter()
                .min_by(|&&x, &&y| values[x][j].total_cmp(&values[y][j]))
                .expect("at least one input");
            let base = values[r][j];
            let mut delta = 0.0;
            for (i, v) in values.iter().enumerate() {
                if i != r && weights[i] != 0.0 {
                    delta += weights[i] * (v[j] - base);
                }
            }
            base + delta
        })
        .collect()
}

/// Linear merge of every in-scope name shared by all inputs. Names outside
/// the scope or missing from some input are copied from the first input
/// that has them, with a `provenance.<name>` metadata note. Metadata
/// otherwise comes from the first input.
pub fn merge_many(recipe: &MergeRecipe) -> Result<Checkpoint> {
    recipe.validate()?;
    let weights: Vec<f64> = recipe.inputs.iter().map(|(_, w)| *w).collect();
    let first = &recipe.inputs[0].0;
    let all_names: BTreeSet<&str> = recipe.inputs.iter().flat_map(|(c, _)| c.names()).collect();
    let mut out = Checkpoint::new();
    out.metadata = first.metadata.clone();
    for name in all_names {
        let holders: Vec<(usize, &StoredTensor)> = recipe
            .inputs
            .iter()
            .enumerate()
            .filter_map(|(i, (c, _))| c.get(name).map(|t| (i, t)))
            .collect();
        let shared = holders.len() == recipe.inputs.len();
        if !shared || !recipe.in_scope(name) {
            let (i, t) = holders[0];
            if !shared {
                log::warn!("{name} is not present in every input; copied from input {i}");
            }
            out.insert(name, t.clone())?;
            out.metadata
                .insert(format!("provenance.{name}"), format!("copied from input {i}"));
            continue;
        }
        let (_, t0) = holders[0];
        for &(i, t) in &holders[1..] {
            if t.shape() != t0.shape() || t.dtype() != t0.dtype() {
                return Err(WeightOpsError::Incompatible {
                    name: name.to_string(),
                    detail: format!(
                        "input 0 has {:?} {}, input {i} has {:?} {}",
                        t0.shape(),
                        t0.dtype().as_str(),
                        t.shape(),
                        t.dtype().as_str()
                    ),
                });
            }
        }
        let values: Vec<Vec<f64>> = holders.iter().map(|(_, t)| t.values_f64()).collect();
        let merged = combine(&values, &weights);
        out.insert(name, StoredTensor::from_f64(t0.shape().to_vec(), &merged, t0.dtype())?)?;
    }
    Ok(out)
}

/// `(1 − base_ratio)·adapted + base_ratio·base` on every shared name.
pub fn merge_pair(adapted: &Checkpoint, base: &Checkpoint, base_ratio: f64) -> Result<Checkpoint> {
    if !(0.0..=1.0).contains(&base_ratio) {
        return Err(WeightOpsError::Weights(format!("base ratio {base_ratio} outside [0, 1]")));
    }
    merge_many(&MergeRecipe::new(vec![
        (adapted.clone(), 1.0 - base_ratio),
        (base.clone(), base_ratio),
    ]))
}
