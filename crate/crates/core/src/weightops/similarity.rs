use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::{Result, WeightOpsError};

/// Attention tensors of a layer, in concatenation order.
pub const ATTENTION_PARTS: [&str; 4] = ["attn.q", "attn.k", "attn.v", "attn.o"];
/// MLP tensors of a layer, in concatenation order (after attention).
pub const MLP_PARTS: [&str; 3] = ["mlp.gate", "mlp.up", "mlp.down"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSimilarity {
    pub layer: usize,
    /// Cosine of the concatenated attention and MLP parameters.
    pub cosine: f64,
    pub attention: f64,
    pub mlp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub layers: Vec<LayerSimilarity>,
    /// Mean of the per-layer cosines.
    pub mean: f64,
}

impl SimilarityReport {
    /// Tab-separated table with a header row.
    pub fn to_table(&self) -> String {
        let mut out = String::from("layer\tcosine\tattention\tmlp\n");
        for l in &self.layers {
            out.push_str(&format!("{}\t{:.6}\t{:.6}\t{:.6}\n", l.layer, l.cosine, l.attention, l.mlp));
        }
        out.push_str(&format!("mean\t{:.6}\t\t\n", self.mean));
        out
    }
}

/// Running sums for one cosine, accumulated in a fixed order.
#[derive(Default, Clone, Copy)]
struct Acc {
    dot: f64,
    aa: f64,
    bb: f64,
}

impl Acc {
    fn add(&mut self, a: &[f64], b: &[f64]) {
        for (x, y) in a.iter().zip(b) {
            self.dot += x * y;
            self.aa += x * x;
            self.bb += y * y;
        }
    }

    fn merge(self, o: Acc) -> Acc {
        Acc {
            dot: self.dot + o.dot,
            aa: self.aa + o.aa,
            bb: self.bb + o.bb,
        }
    }

    /// Two zero vectors count as identical; one zero vector as orthogonal.
    fn cosine(self) -> f64 {
        if self.aa == 0.0 && self.bb == 0.0 {
            return 1.0;
        }
        if self.aa == 0.0 || self.bb == 0.0 {
            return 0.0;
        }
        (self.dot / (self.aa * self.bb).sqrt()).clamp(-1.0, 1.0)
    }
}

fn layer_count(c: &Checkpoint) -> usize {
    (0..)
        .take_while(|l| c.get(&format!("backbone.layer{l}.{}", ATTENTION_PARTS[0])).is_some())
        .count()
}

/// Flattened parameter vectors of a layer, in the fixed order
/// `q, k, v, o, gate, up, down`.
pub fn layer_vector(c: &Checkpoint, layer: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in ATTENTION_PARTS.iter().chain(&MLP_PARTS) {
        let name = format!("backbone.layer{layer}.{part}");
        let t = c.get(&name).ok_or_else(|| WeightOpsError::Structure(format!("missing {name}")))?;
        out.extend(t.values_f64());
    }
    Ok(out)
}

/// Per-layer cosine similarity of the attention and MLP parameters of two
/// checkpoints with the same layer structure. Norms and embeddings are not
/// included.
pub fn layer_similarity(a: &Checkpoint, b: &Checkpoint) -> Result<SimilarityReport> {
    let n = layer_count(a);
    if n != layer_count(b) {
        return Err(WeightOpsError::Structure(format!(
            "layer counts differ: {n} vs {}",
            layer_count(b)
        )));
    }
    if n == 0 {
        return Err(WeightOpsError::Structure("no transformer layers found".into()));
    }
    let mut layers = Vec::with_capacity(n);
    for l in 0..n {
        let group = |parts: &[&str]| -> Result<Acc> {
            let mut acc = Acc::default();
            for part in parts {
                let name = format!("backbone.layer{l}.{part}");
                let missing = || WeightOpsError::Structure(format!("missing {name}"));
                let ta = a.get(&name).ok_or_else(missing)?;
                let tb = b.get(&name).ok_or_else(missing)?;
                if ta.shape() != tb.shape() {
                    return Err(WeightOpsError::Incompatible {
                        name: name.clone(),
                        detail: format!("shapes {:?} vs {:?}", ta.shape(), tb.shape()),
                    });
                }
                acc.add(&ta.values_f64(), &tb.values_f64());
            }
            Ok(acc)
        };
        let attn = group(&ATTENTION_PARTS)?;
        let mlp = group(&MLP_PARTS)?;
        layers.push(LayerSimilarity {
            layer: l,
            cosine: attn.merge(mlp).cosine(),
            attention: attn.cosine(),
            mlp: mlp.cosine(),
        });
    }
    let mean = layers.iter().map(|l| l.cosine).sum::<f64>() / n as f64;
    Ok(SimilarityReport { layers, mean })
}
