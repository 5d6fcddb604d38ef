//! Token masking and the three adaptation losses: MLM, MNTP and InfoNCE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{Graph, Var};
use crate::model::{AttentionMode, ForwardOutput};
use crate::tensor::{kernels, Scalar, TensorError};
use crate::vocab;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("masking probability {0} is outside (0, 1]")]
    MaskProbability(f64),
    #[error("sequence must start with BOS")]
    MissingBos,
    #[error("MNTP cannot score position 0: there is no preceding position")]
    PositionZero,
    #[error("masked position {pos} is outside a sequence of length {len}")]
    Position { pos: usize, len: usize },
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("embedding {0} has zero norm; cosine similarity is undefined")]
    ZeroNorm(&'static str),
    #[error("embedding dimensions differ: {0} vs {1}")]
    Dim(usize, usize),
    #[error("batch is empty")]
    EmptyBatch,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ObjectiveError> = std::result::Result<T, E>;

/// Sweep values for the masking ratio.
pub const MASK_RATIO_SWEEP: [f64; 4] = [0.10, 0.20, 0.30, 0.40];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskingSpec {
    p_mask: f64,
    pub seed: u64,
}

impl MaskingSpec {
    pub fn new(p_mask: f64, seed: u64) -> Result<Self> {
        if !(p_mask > 0.0 && p_mask <= 1.0) {
            return Err(ObjectiveError::MaskProbability(p_mask));
        }
        Ok(Self { p_mask, seed })
    }

    pub fn p_mask(&self) -> f64 {
        self.p_mask
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    /// Position 0 and special tokens (BOS, PAD, MASK, ...) are never masked.
    pub fn is_maskable(pos: usize, token: usize) -> bool {
        pos > 0 && !vocab::is_special(token)
    }
}

/// A masked sequence: `original` is x, `masked` is x_M, `positions` is M.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskOutcome {
    pub original: Vec<usize>,
    pub masked: Vec<usize>,
    pub positions: Vec<usize>,
}

impl MaskOutcome {
    /// Builds an outcome from explicit positions.
    pub fn from_positions(original: Vec<usize>, positions: Vec<usize>) -> Result<Self> {
        let mut masked = original.clone();
        let mut positions = positions;
        positions.sort_unstable();
        positions.dedup();
        for &p in &positions {
            if p >= original.len() {
                return Err(ObjectiveError::Position {
                    pos: p,
                    len: original.len(),
                });
            }
            masked[p] = vocab::MASK;
        }
        Ok(Self {
            original,
            masked,
            positions,
        })
    }
}

/// Masks each eligible position independently with probability `p_mask`.
pub fn apply_masking(tokens: &[usize], spec: &MaskingSpec) -> Result<MaskOutcome> {
    if tokens.first() != Some(&vocab::BOS) {
        return Err(ObjectiveError::MissingBos);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut masked = tokens.to_vec();
    let mut positions = Vec::new();
    for (i, &t) in tokens.iter().enumerate() {
        if !MaskingSpec::is_maskable(i, t) {
            continue;
        }
        if rng.random::<f64>() < spec.p_mask {
            masked[i] = vocab::MASK;
            positions.push(i);
        }
    }
    Ok(MaskOutcome {
        original: tokens.to_vec(),
        masked,
        positions,
    })
}

/// Which logits row scores a masked position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskedObjective {
    /// Row `i` predicts `x_i`.
    Mlm,
    /// Row `i − 1` predicts `x_i`.
    Mntp,
}

/// `(logits row, target token)` for every masked position.
pub fn scoring_pairs(outcome: &MaskOutcome, objective: MaskedObjective) -> Result<Vec<(usize, usize)>> {
    outcome
        .positions
        .iter()
        .map(|&i| {
            if i >= outcome.original.len() {
                return Err(ObjectiveError::Position {
                    pos: i,
                    len: outcome.original.len(),
                });
            }
            let row = match objective {
                MaskedObjective::Mlm => i,
                MaskedObjective::Mntp => i.checked_sub(1).ok_or(ObjectiveError::PositionZero)?,
            };
            Ok((row, outcome.original[i]))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedLoss {
    /// Summed negative log-likelihood over M.
    pub sum: f64,
    pub count: usize,
    /// Per-token mean, 0 when M is empty.
    pub mean: f64,
    /// Set when the logits came from a causal pass.
    pub causal_warning: bool,
}

fn masked_loss<F: Scalar>(
    output: &ForwardOutput<F>,
    outcome: &MaskOutcome,
    objective: MaskedObjective,
) -> Result<MaskedLoss> {
    let pairs = scoring_pairs(outcome, objective)?;
    let (rows, cols) = output.logits.dims2()?;
    if let Some(&(r, _)) = pairs.iter().find(|(r, _)| *r >= rows) {
        return Err(ObjectiveError::Position { pos: r, len: rows });
    }
    let (sum, _) = kernels::cross_entropy(output.logits.data(), cols, &pairs, None);
    let sum = sum.as_f64();
    let count = pairs.len();
    let causal_warning = output.mode == AttentionMode::Causal;
    if causal_warning {
        log::warn!("{objective:?} loss evaluated on causal-mode logits");
    }
    Ok(MaskedLoss {
        sum,
        count,
        mean: if count == 0 { 0.0 } else { sum / count as f64 },
        causal_warning,
    })
}

/// `−Σ_{i∈M} log p(x_i | x_M)` read at row `i`.
pub fn mlm_loss<F: Scalar>(output: &ForwardOutput<F>, outcome: &MaskOutcome) -> Result<MaskedLoss> {
    masked_loss(output, outcome, MaskedObjective::Mlm)
}

/// `−Σ_{i∈M} log p_{i−1}(x_i | x_M)` read at row `i − 1`.
pub fn mntp_loss<F: Scalar>(output: &ForwardOutput<F>, outcome: &MaskOutcome) -> Result<MaskedLoss> {
    masked_loss(output, outcome, MaskedObjective::Mntp)
}

/// Summed masked loss recorded on a graph.
pub fn masked_loss_graph<F: Scalar>(
    g: &mut Graph<F>,
    logits: Var,
    outcome: &MaskOutcome,
    objective: MaskedObjective,
) -> Result<Var> {
    let pairs = scoring_pairs(outcome, objective)?;
    Ok(g.cross_entropy(logits, &pairs, None)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub temperature: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { temperature: 0.05 }
    }
}

impl ContrastiveConfig {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(ObjectiveError::Temperature(temperature));
        }
        Ok(Self { temperature })
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ObjectiveError::Dim(a.len(), b.len()));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 {
        return Err(ObjectiveError::ZeroNorm("left"));
    }
    if nb == 0.0 {
        return Err(ObjectiveError::ZeroNorm("right"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `−log softmax` of the positive among `{positive} ∪ negatives` under
/// temperature-scaled cosine similarity.
pub fn infonce_loss(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[Vec<f64>],
    cfg: &ContrastiveConfig,
) -> Result<f64> {
    if !(cfg.temperature > 0.0) {
        return Err(ObjectiveError::Temperature(cfg.temperature));
    }
    let pos = cosine(anchor, positive)? / cfg.temperature;
    let mut logits = vec![pos];
    for n in negatives {
        logits.push(cosine(anchor, n)? / cfg.temperature);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rest: f64 = logits[1..].iter().map(|l| (l - max).exp()).sum();
    // ln_1p keeps precision when the positive dominates
    let tail = if pos == max {
        rest.ln_1p()
    } else {
        ((pos - max).exp() + rest).ln()
    };
    Ok(max - pos + tail)
}

/// Pooled embeddings of one contrastive batch.
#[derive(Debug, Clone, Default)]
pub struct BatchEmbeddings {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    /// Per-anchor hard negatives (may be empty).
    pub hard_negatives: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub mean: f64,
    /// A single anchor with no hard negatives has no negatives at all.
    pub degenerate: bool,
}

/// Mean InfoNCE where each anchor's negatives are the other anchors'
/// positives plus its own hard negatives.
pub fn infonce_batch_loss(batch: &BatchEmbeddings, cfg: &ContrastiveConfig) -> Result<BatchLoss> {
    let n = batch.anchors.len();
    if n == 0 {
        return Err(ObjectiveError::EmptyBatch);
    }
    if batch.positives.len() != n {
        return Err(ObjectiveError::Dim(n, batch.positives.len()));
    }
    let mut total = 0.0;
    let mut degenerate = n == 1;
    for k in 0..n {
        let mut negatives: Vec<Vec<f64>> = (0..n)
            .filter(|&j| j != k)
            .map(|j| batch.positives[j].clone())
            .collect();
        let hard = batch.hard_negatives.get(k).map(Vec::as_slice).unwrap_or(&[]);
        if !hard.is_empty() {
            degenerate = false;
        }
        negatives.extend(hard.iter().cloned());
        total += infonce_loss(&batch.anchors[k], &batch.positives[k], &negatives, cfg)?;
    }
    Ok(BatchLoss {
        mean: total / n as f64,
        degenerate,
    })
}

/// Graph form of [`infonce_batch_loss`]. Each input var is a `[1, H]`
/// pooled embedding. Returns the mean loss over anchors.
pub fn infonce_graph<F: Scalar>(
    g: &mut Graph<F>,
    anchors: &[Var],
    positives: &[Var],
    hard_negatives: &[Vec<Var>],
    cfg: &ContrastiveConfig,
) -> Result<Var> {
    let n = anchors.len();
    if n == 0 {
        return Err(ObjectiveError::EmptyBatch);
    }
    if positives.len() != n {
        return Err(ObjectiveError::Dim(n, positives.len()));
    }
    let mut candidates = positives.to_vec();
    let mut owner = Vec::new();
    for (k, negs) in hard_negatives.iter().enumerate() {
        candidates.extend_from_slice(negs);
        owner.extend(std::iter::repeat_n(k, negs.len()));
    }
    let a = g.concat_rows(anchors)?;
    let a = g.l2_normalize_rows(a)?;
    let c = g.concat_rows(&candidates)?;
    let c = g.l2_normalize_rows(c)?;
    let sims = g.matmul_bt(a, c)?;
    let logits = g.scale(sims, 1.0 / cfg.temperature);
    let m = candidates.len();
    let mut allow = vec![false; n * m];
    for k in 0..n {
        for j in 0..m {
            allow[k * m + j] = j < n || owner[j - n] == k;
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n).map(|k| (k, k)).collect();
    let sum = g.cross_entropy(logits, &pairs, Some(&allow))?;
    Ok(g.scale(sum, 1.0 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Transformer};
    use crate::tensor::Tensor;
    use crate::vocab::{BOS, MASK, PAD};

    fn uniform_output(t: usize, v: usize, mode: AttentionMode) -> ForwardOutput<f64> {
        ForwardOutput {
            hidden_states: vec![],
            final_hidden: Tensor::zeros([t, 1]),
            logits: Tensor::zeros([t, v]),
            mode,
        }
    }

    #[test]
    fn masking_spec_bounds() {
        assert!(MaskingSpec::new(0.0, 1).is_err());
        assert!(MaskingSpec::new(1.1, 1).is_err());
        assert!(MaskingSpec::new(f64::NAN, 1).is_err());
        assert!(MaskingSpec::new(1.0, 1).is_ok());
    }

    #[test]
    fn full_masking_hits_every_eligible_position() {
        let toks = vec![BOS, 10, 11, PAD, 12, MASK, 13];
        let out = apply_masking(&toks, &MaskingSpec::new(1.0, 7).unwrap()).unwrap();
        assert_eq!(out.positions, vec![1, 2, 4, 6]);
        for (i, (&o, &m)) in out.original.iter().zip(&out.masked).enumerate() {
            if out.positions.contains(&i) {
                assert_eq!(m, MASK);
            } else {
                assert_eq!(o, m);
            }
        }
    }

    #[test]
    fn masking_requires_bos_and_is_seeded() {
        let spec = MaskingSpec::new(0.3, 11).unwrap();
        assert!(matches!(apply_masking(&[1, 2], &spec), Err(ObjectiveError::MissingBos)));
        let toks: Vec<usize> = std::iter::once(BOS).chain(0..100).collect();
        assert_eq!(
            apply_masking(&toks, &spec).unwrap(),
            apply_masking(&toks, &spec).unwrap()
        );
        assert_ne!(
            apply_masking(&toks, &spec).unwrap(),
            apply_masking(&toks, &spec.with_seed(12)).unwrap()
        );
    }

    #[test]
    fn tiny_probability_can_mask_nothing() {
        let toks = vec![BOS, 1, 2, 3];
        let out = apply_masking(&toks, &MaskingSpec::new(1e-12, 3).unwrap()).unwrap();
        assert!(out.positions.is_empty());
        let o = uniform_output(4, 4, AttentionMode::Bidirectional);
        let mut o2 = o.clone();
        o2.logits = Tensor::zeros([4, 260]);
        assert_eq!(mlm_loss(&o2, &out).unwrap().sum, 0.0);
    }

    #[test]
    fn half_masking_concentrates() {
        let toks: Vec<usize> = std::iter::once(BOS).chain((0..10_000).map(|i| i % 256)).collect();
        let out = apply_masking(&toks, &MaskingSpec::new(0.5, 42).unwrap()).unwrap();
        let frac = out.positions.len() as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "{frac}");
    }

    #[test]
    fn uniform_logit_losses() {
        let o = uniform_output(5, 4, AttentionMode::Bidirectional);
        let outcome = MaskOutcome::from_positions(vec![BOS, 0, 1, 2, 3], vec![1, 2, 4]).unwrap();
        let mlm = mlm_loss(&o, &outcome).unwrap();
        assert!((mlm.sum - 3.0 * 4f64.ln()).abs() < 1e-12);
        assert!((mlm.sum - 4.15888).abs() < 1e-5);
        let two = MaskOutcome::from_positions(vec![BOS, 0, 1, 2, 3], vec![2, 3]).unwrap();
        let mntp = mntp_loss(&o, &two).unwrap();
        assert!((mntp.sum - 2.77259).abs() < 1e-5);
        let empty = MaskOutcome::from_positions(vec![BOS, 0], vec![]).unwrap();
        assert_eq!(mntp_loss(&o, &empty).unwrap().sum, 0.0);
        assert!(!mlm.causal_warning);
        let causal = uniform_output(5, 4, AttentionMode::Causal);
        assert!(mlm_loss(&causal, &outcome).unwrap().causal_warning);
    }

    #[test]
    fn mntp_rejects_position_zero() {
        let o = uniform_output(3, 4, AttentionMode::Bidirectional);
        let bad = MaskOutcome::from_positions(vec![1, 2, 3], vec![0]).unwrap();
        assert!(matches!(mntp_loss(&o, &bad), Err(ObjectiveError::PositionZero)));
    }

    #[test]
    fn shift_semantics() {
        // Row i-1 is confident in x_i, row i is confident in something else.
        let x = vec![BOS, 3, 1, 2];
        let v = 4;
        let mut logits = Tensor::<f64>::zeros([4, v]);
        for i in 1..4 {
            logits.data_mut()[(i - 1) * v + x[i]] = 50.0;
        }
        let o = ForwardOutput {
            hidden_states: vec![],
            final_hidden: Tensor::zeros([4, 1]),
            logits,
            mode: AttentionMode::Bidirectional,
        };
        let outcome = MaskOutcome::from_positions(x, vec![1, 2, 3]).unwrap();
        assert!(mntp_loss(&o, &outcome).unwrap().sum < 1e-9);
        assert!(mlm_loss(&o, &outcome).unwrap().sum >= (v as f64).ln() / 2.0);
    }

    #[test]
    fn infonce_cases() {
        let cfg = ContrastiveConfig::default();
        let a = vec![1.0, 0.0];
        assert_eq!(infonce_loss(&a, &a, &[], &cfg).unwrap(), 0.0);
        let l = infonce_loss(&a, &a, &[vec![0.0, 1.0]], &cfg).unwrap();
        let expected = (-20f64).exp().ln_1p();
        assert!((l - expected).abs() < 1e-18);
        assert!((l - 2.06e-9).abs() < 1e-11);
        let p = vec![0.6, 0.8];
        let negs = vec![vec![0.6, -0.8], vec![0.6, 0.8], vec![6.0, -8.0]];
        let sym = infonce_loss(&a, &p, &negs, &cfg).unwrap();
        assert!((sym - 4f64.ln()).abs() < 1e-12);
        assert!(matches!(
            infonce_loss(&a, &[0.0, 0.0], &[], &cfg),
            Err(ObjectiveError::ZeroNorm(_))
        ));
        assert!(ContrastiveConfig::new(0.0).is_err());
    }

    #[test]
    fn batch_cases() {
        let cfg = ContrastiveConfig::default();
        let tau = cfg.temperature;
        let b = BatchEmbeddings {
            anchors: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            positives: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            hard_negatives: vec![],
        };
        let l = infonce_batch_loss(&b, &cfg).unwrap();
        let closed = -((1.0 / tau).exp() / ((1.0 / tau).exp() + 1.0)).ln();
        assert!((l.mean - closed).abs() < 1e-15);
        assert!(!l.degenerate);

        for t in [0.05, 1.0, 3.0] {
            let dup = BatchEmbeddings {
                anchors: vec![vec![1.0, 2.0], vec![1.0, 2.0]],
                positives: vec![vec![1.0, 2.0], vec![1.0, 2.0]],
                hard_negatives: vec![],
            };
            let l = infonce_batch_loss(&dup, &ContrastiveConfig::new(t).unwrap()).unwrap();
            assert!((l.mean - 2f64.ln()).abs() < 1e-12);
        }

        let single = BatchEmbeddings {
            anchors: vec![vec![1.0, 0.0, 0.0, 0.0]],
            positives: vec![vec![1.0, 0.0, 0.0, 0.0]],
            hard_negatives: vec![vec![
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ]],
        };
        let l = infonce_batch_loss(&single, &cfg).unwrap();
        assert!((l.mean - (3.0 * (-1.0 / tau).exp()).ln_1p()).abs() < 1e-18);
        assert!(l.mean < 1e-8);

        let lone = BatchEmbeddings {
            anchors: vec![vec![1.0, 0.0]],
            positives: vec![vec![0.5, 0.5]],
            hard_negatives: vec![],
        };
        let l = infonce_batch_loss(&lone, &cfg).unwrap();
        assert!(l.degenerate);
        assert_eq!(l.mean, 0.0);
    }

    #[test]
    fn graph_infonce_matches_plain() {
        let cfg = ContrastiveConfig::new(0.1).unwrap();
        let rows = [
            vec![0.3, -0.2, 0.9],
            vec![0.1, 0.4, -0.5],
            vec![-0.7, 0.2, 0.1],
            vec![0.5, 0.5, 0.5],
            vec![0.2, -0.9, 0.3],
        ];
        let plain = infonce_batch_loss(
            &BatchEmbeddings {
                anchors: vec![rows[0].clone(), rows[1].clone()],
                positives: vec![rows[2].clone(), rows[3].clone()],
                hard_negatives: vec![vec![rows[4].clone()], vec![]],
            },
            &cfg,
        )
        .unwrap();
        let mut g = Graph::<f64>::new();
        let v: Vec<Var> = rows
            .iter()
            .map(|r| g.constant([1, 3], r.clone()).unwrap())
            .collect();
        let loss = infonce_graph(&mut g, &[v[0], v[1]], &[v[2], v[3]], &[vec![v[4]], vec![]], &cfg)
            .unwrap();
        assert!((g.scalar(loss) - plain.mean).abs() < 1e-12);
    }

    #[test]
    fn graph_masked_loss_matches_plain() {
        let m = Transformer::<f64>::new(ModelConfig::tiny(), 4).unwrap();
        let outcome = MaskOutcome::from_positions(vec![BOS, 5, 6, 7, 8], vec![2, 4]).unwrap();
        let out = m.forward(&outcome.masked, AttentionMode::Bidirectional).unwrap();
        for obj in [MaskedObjective::Mlm, MaskedObjective::Mntp] {
            let plain = masked_loss(&out, &outcome, obj).unwrap().sum;
            let mut g = Graph::new();
            let vars = m.register(&mut g);
            let fwd = m
                .forward_graph(&mut g, &vars, &outcome.masked, AttentionMode::Bidirectional, true)
                .unwrap();
            let l = masked_loss_graph(&mut g, fwd.logits.unwrap(), &outcome, obj).unwrap();
            assert!((g.scalar(l) - plain).abs() < 1e-12);
        }
    }
}
