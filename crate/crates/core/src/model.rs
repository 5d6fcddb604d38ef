//! Pre-norm decoder transformer with a runtime-switchable attention mask.
//!
//! The same weights run in causal or bidirectional mode; only the
//! attention allow-matrix differs. Parameter names follow the checkpoint
//! convention:
//!
//! ```text
//! backbone.embed                      [vocab, hidden]
//! backbone.layer{i}.norm1.gain        [hidden]
//! backbone.layer{i}.attn.{q,k,v,o}    [hidden, hidden]
//! backbone.layer{i}.norm2.gain        [hidden]
//! backbone.layer{i}.mlp.{gate,up}     [hidden, ffn]
//! backbone.layer{i}.mlp.down          [ffn, hidden]
//! backbone.final_norm.gain            [hidden]
//! backbone.lm_head                    [vocab, hidden]   (absent when tied)
//! ```
//!
//! Projection matrices are stored `[in, out]` and applied as `x · W`.

use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{Graph, Var};
use crate::tensor::{Scalar, Tensor, TensorError};
use crate::vocab;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token {id} at position {pos} is outside the vocabulary of {vocab}")]
    TokenOutOfRange { pos: usize, id: usize, vocab: usize },
    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty token sequence")]
    Empty,
    #[error("cannot pool a sequence made only of PAD tokens")]
    AllPad,
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("parameter {name} has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub n_layers: usize,
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub tie_embeddings: bool,
    pub rope_base: f64,
    #[serde(default = "default_norm_eps")]
    pub norm_eps: f64,
}

fn default_norm_eps() -> f64 {
    1e-6
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Default desk-scale configuration.
    pub fn desk() -> Self {
        Self {
            vocab_size: vocab::DEFAULT_VOCAB,
            n_layers: 2,
            hidden_dim: 64,
            n_heads: 4,
            head_dim: 16,
            ffn_dim: 128,
            max_seq_len: 128,
            tie_embeddings: false,
            rope_base: 10_000.0,
            norm_eps: 1e-6,
        }
    }

    /// Very small model used for exhaustive gradient checks.
    pub fn tiny() -> Self {
        Self {
            vocab_size: vocab::DEFAULT_VOCAB,
            n_layers: 2,
            hidden_dim: 8,
            n_heads: 2,
            head_dim: 4,
            ffn_dim: 12,
            max_seq_len: 16,
            tie_embeddings: false,
            rope_base: 10_000.0,
            norm_eps: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.hidden_dim != self.n_heads * self.head_dim {
            return fail(format!(
                "hidden_dim {} != n_heads {} * head_dim {}",
                self.hidden_dim, self.n_heads, self.head_dim
            ));
        }
        if self.vocab_size < vocab::MIN_VOCAB {
            return fail(format!(
                "vocab_size {} < {} (bytes + BOS + MASK + PAD)",
                self.vocab_size,
                vocab::MIN_VOCAB
            ));
        }
        if self.head_dim % 2 != 0 {
            return fail(format!("head_dim {} must be even for RoPE", self.head_dim));
        }
        if self.n_layers == 0 || self.ffn_dim == 0 || self.max_seq_len == 0 {
            return fail("n_layers, ffn_dim and max_seq_len must be positive".into());
        }
        if !(self.rope_base > 0.0) {
            return fail(format!("rope_base {} must be positive", self.rope_base));
        }
        Ok(())
    }

    /// Every parameter name and shape, in a fixed order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (v, h, f) = (self.vocab_size, self.hidden_dim, self.ffn_dim);
        let mut out = vec![("backbone.embed".to_string(), vec![v, h])];
        for i in 0..self.n_layers {
            let p = format!("backbone.layer{i}");
            out.push((format!("{p}.norm1.gain"), vec![h]));
            for w in ["q", "k", "v", "o"] {
                out.push((format!("{p}.attn.{w}"), vec![h, h]));
            }
            out.push((format!("{p}.norm2.gain"), vec![h]));
            out.push((format!("{p}.mlp.gate"), vec![h, f]));
            out.push((format!("{p}.mlp.up"), vec![h, f]));
            out.push((format!("{p}.mlp.down"), vec![f, h]));
        }
        out.push(("backbone.final_norm.gain".to_string(), vec![h]));
        if !self.tie_embeddings {
            out.push(("backbone.lm_head".to_string(), vec![v, h]));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    Causal,
    Bidirectional,
}

impl FromStr for AttentionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "causal" => Ok(Self::Causal),
            "bidirectional" | "bi" => Ok(Self::Bidirectional),
            other => Err(format!("unknown attention mode {other:?}")),
        }
    }
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Causal => "causal",
            Self::Bidirectional => "bidirectional",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingStrategy {
    Mean,
    LastToken,
}

impl PoolingStrategy {
    /// Causal models read the last token, bidirectional ones average.
    pub fn default_for(mode: AttentionMode) -> Self {
        match mode {
            AttentionMode::Causal => Self::LastToken,
            AttentionMode::Bidirectional => Self::Mean,
        }
    }
}

impl FromStr for PoolingStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mean" => Ok(Self::Mean),
            "last_token" | "last" => Ok(Self::LastToken),
            other => Err(format!("unknown pooling strategy {other:?}")),
        }
    }
}

impl fmt::Display for PoolingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::LastToken => "last_token",
        })
    }
}

/// Row-major `[T, T]` matrix; `allow[i*T + j]` lets query `i` see key `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    pub len: usize,
    pub allow: Vec<bool>,
}

impl AttentionMask {
    pub fn allows(&self, query: usize, key: usize) -> bool {
        self.allow[query * self.len + key]
    }

    pub fn to_tensor<F: Scalar>(&self) -> Tensor<F> {
        let data = self
            .allow
            .iter()
            .map(|&a| if a { F::one() } else { F::zero() })
            .collect();
        Tensor::new([self.len, self.len], data).expect("square mask")
    }
}

/// Causal masks are lower triangular, bidirectional ones full; PAD key
/// columns (`pad_mask[j] == true`) are blocked in both.
pub fn build_attention_mask(mode: AttentionMode, len: usize, pad_mask: &[bool]) -> AttentionMask {
    let mut allow = vec![false; len * len];
    for i in 0..len {
        for j in 0..len {
            let visible = match mode {
                AttentionMode::Causal => j <= i,
                AttentionMode::Bidirectional => true,
            };
            allow[i * len + j] = visible && !pad_mask.get(j).copied().unwrap_or(false);
        }
    }
    AttentionMask { len, allow }
}

pub fn pad_mask(tokens: &[usize]) -> Vec<bool> {
    tokens.iter().map(|&t| t == vocab::PAD).collect()
}

/// Values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput<F: Scalar> {
    /// Residual stream after each block, `[T, hidden]`.
    pub hidden_states: Vec<Tensor<F>>,
    /// Final-norm output, the representation used for pooling.
    pub final_hidden: Tensor<F>,
    pub logits: Tensor<F>,
    pub mode: AttentionMode,
}

/// Vars of one forward pass recorded on a graph.
#[derive(Debug, Clone)]
pub struct GraphOutput {
    pub hidden_states: Vec<Var>,
    pub final_hidden: Var,
    pub logits: Option<Var>,
}

/// Parameters registered on a graph, by name.
pub type ParamVars = BTreeMap<String, Var>;

#[derive(Debug, Clone, PartialEq)]
pub struct Transformer<F: Scalar> {
    config: ModelConfig,
    params: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> Transformer<F> {
    /// Seeded init: projections and embeddings ~ N(0, 0.02), gains 1.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let mut params = BTreeMap::new();
        for (name, shape) in config.param_shapes() {
            let n: usize = shape.iter().product();
            let data: Vec<F> = if name.ends_with(".gain") {
                vec![F::one(); n]
            } else {
                (0..n).map(|_| F::of(normal.sample(&mut rng))).collect()
            };
            params.insert(name, Tensor::new(shape, data)?.requiring_grad());
        }
        Ok(Self { config, params })
    }

    /// Builds a model from named tensors; names and shapes must match
    /// `config` exactly.
    pub fn from_params(config: ModelConfig, mut named: BTreeMap<String, Tensor<F>>) -> Result<Self> {
        config.validate()?;
        let mut params = BTreeMap::new();
        for (name, shape) in config.param_shapes() {
            let mut t = named
                .remove(&name)
                .ok_or_else(|| ModelError::MissingParam(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::ParamShape {
                    name,
                    expected: shape,
                    got: t.shape().to_vec(),
                });
            }
            t.set_requires_grad(true);
            params.insert(name, t);
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor<F>> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut BTreeMap<String, Tensor<F>> {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<F>> {
        self.params.get(name)
    }

    pub fn num_params(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn cast<G: Scalar>(&self) -> Transformer<G> {
        Transformer {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Records every parameter as a graph leaf.
    pub fn register(&self, g: &mut Graph<F>) -> ParamVars {
        self.params
            .iter()
            .map(|(k, t)| (k.clone(), g.leaf(t)))
            .collect()
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(ModelError::Empty);
        }
        if tokens.len() > self.config.max_seq_len {
            return Err(ModelError::TooLong {
                len: tokens.len(),
                max: self.config.max_seq_len,
            });
        }
        if let Some((pos, &id)) = tokens
            .iter()
            .enumerate()
            .find(|(_, &t)| t >= self.config.vocab_size)
        {
            return Err(ModelError::TokenOutOfRange {
                pos,
                id,
                vocab: self.config.vocab_size,
            });
        }
        Ok(())
    }

    fn rope_tables(&self, len: usize) -> (Rc<Vec<F>>, Rc<Vec<F>>) {
        let half = self.config.head_dim / 2;
        let mut cos = Vec::with_capacity(len * half);
        let mut sin = Vec::with_capacity(len * half);
        for p in 0..len {
            for i in 0..half {
                let freq = self
                    .config
                    .rope_base
                    .powf(-(2.0 * i as f64) / self.config.head_dim as f64);
                let angle = p as f64 * freq;
                cos.push(F::of(angle.cos()));
                sin.push(F::of(angle.sin()));
            }
        }
        (Rc::new(cos), Rc::new(sin))
    }

    /// Records a forward pass. `with_logits = false` skips the output
    /// projection (embedding-only uses).
    pub fn forward_graph(
        &self,
        g: &mut Graph<F>,
        vars: &ParamVars,
        tokens: &[usize],
        mode: AttentionMode,
        with_logits: bool,
    ) -> Result<GraphOutput> {
        self.check_tokens(tokens)?;
        let cfg = &self.config;
        let p = |name: &str| -> Result<Var> {
            vars.get(name)
                .copied()
                .ok_or_else(|| ModelError::MissingParam(name.to_string()))
        };
        let len = tokens.len();
        let mask = build_attention_mask(mode, len, &pad_mask(tokens));
        let (cos, sin) = self.rope_tables(len);
        let scale = 1.0 / (cfg.head_dim as f64).sqrt();

        let embed = p("backbone.embed")?;
        let mut x = g.gather_rows(embed, tokens)?;
        let mut hidden_states = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let pre = format!("backbone.layer{l}");
            let n1 = g.rmsnorm(x, p(&format!("{pre}.norm1.gain"))?, cfg.norm_eps)?;
            let q = g.matmul(n1, p(&format!("{pre}.attn.q"))?)?;
            let k = g.matmul(n1, p(&format!("{pre}.attn.k"))?)?;
            let v = g.matmul(n1, p(&format!("{pre}.attn.v"))?)?;
            let q = g.rope(q, cfg.head_dim, cos.clone(), sin.clone())?;
            let k = g.rope(k, cfg.head_dim, cos.clone(), sin.clone())?;
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for h in 0..cfg.n_heads {
                let qh = g.slice_cols(q, h * cfg.head_dim, cfg.head_dim)?;
                let kh = g.slice_cols(k, h * cfg.head_dim, cfg.head_dim)?;
                let vh = g.slice_cols(v, h * cfg.head_dim, cfg.head_dim)?;
                let scores = g.matmul_bt(qh, kh)?;
                let scores = g.scale(scores, scale);
                let probs = g.masked_softmax(scores, Some(&mask.allow))?;
                heads.push(g.matmul(probs, vh)?);
            }
            let attn = g.concat_cols(&heads)?;
            let attn = g.matmul(attn, p(&format!("{pre}.attn.o"))?)?;
            x = g.add(x, attn)?;

            let n2 = g.rmsnorm(x, p(&format!("{pre}.norm2.gain"))?, cfg.norm_eps)?;
            let gate = g.matmul(n2, p(&format!("{pre}.mlp.gate"))?)?;
            let up = g.matmul(n2, p(&format!("{pre}.mlp.up"))?)?;
            let act = g.silu(gate);
            let gated = g.mul(act, up)?;
            let down = g.matmul(gated, p(&format!("{pre}.mlp.down"))?)?;
            x = g.add(x, down)?;
            hidden_states.push(x);
        }
        let final_hidden = g.rmsnorm(x, p("backbone.final_norm.gain")?, cfg.norm_eps)?;
        let logits = if with_logits {
            let head = if cfg.tie_embeddings {
                embed
            } else {
                p("backbone.lm_head")?
            };
            Some(g.matmul_bt(final_hidden, head)?)
        } else {
            None
        };
        Ok(GraphOutput {
            hidden_states,
            final_hidden,
            logits,
        })
    }

    /// Plain forward pass (no gradients kept).
    pub fn forward(&self, tokens: &[usize], mode: AttentionMode) -> Result<ForwardOutput<F>> {
        let mut g = Graph::new();
        let vars: ParamVars = self
            .params
            .iter()
            .map(|(k, t)| {
                let v = g
                    .constant(t.shape().to_vec(), t.data().to_vec())
                    .expect("parameter shapes are consistent");
                (k.clone(), v)
            })
            .collect();
        let out = self.forward_graph(&mut g, &vars, tokens, mode, true)?;
        Ok(ForwardOutput {
            hidden_states: out.hidden_states.iter().map(|&v| g.tensor(v)).collect(),
            final_hidden: g.tensor(out.final_hidden),
            logits: g.tensor(out.logits.expect("logits requested")),
            mode,
        })
    }

    /// Pooled sequence embedding, `[hidden]`.
    pub fn embed(
        &self,
        tokens: &[usize],
        mode: AttentionMode,
        strategy: PoolingStrategy,
    ) -> Result<Vec<F>> {
        let mut g = Graph::new();
        let vars: ParamVars = self
            .params
            .iter()
            .map(|(k, t)| {
                let v = g
                    .constant(t.shape().to_vec(), t.data().to_vec())
                    .expect("parameter shapes are consistent");
                (k.clone(), v)
            })
            .collect();
        let out = self.forward_graph(&mut g, &vars, tokens, mode, false)?;
        let pooled = pool_graph(&mut g, out.final_hidden, strategy, &pad_mask(tokens))?;
        Ok(g.value(pooled).to_vec())
    }
}

fn non_pad_rows(len: usize, pad_mask: &[bool]) -> Vec<usize> {
    (0..len)
        .filter(|&i| !pad_mask.get(i).copied().unwrap_or(false))
        .collect()
}

/// Pools `hidden [T, H]` into `[H]`, skipping PAD rows.
pub fn pool<F: Scalar>(
    hidden: &Tensor<F>,
    strategy: PoolingStrategy,
    pad_mask: &[bool],
) -> Result<Tensor<F>> {
    let (t, h) = hidden.dims2()?;
    let rows = non_pad_rows(t, pad_mask);
    let last = *rows.last().ok_or(ModelError::AllPad)?;
    let data = match strategy {
        PoolingStrategy::LastToken => hidden.row(last)?.to_vec(),
        PoolingStrategy::Mean => {
            let mut acc = vec![F::zero(); h];
            for &r in &rows {
                for (a, &v) in acc.iter_mut().zip(hidden.row(r)?) {
                    *a = *a + v;
                }
            }
            let n = F::of(rows.len() as f64);
            acc.into_iter().map(|v| v / n).collect()
        }
    };
    Ok(Tensor::new([h], data)?)
}

/// Graph version of [`pool`]; returns a `[1, H]` var.
pub fn pool_graph<F: Scalar>(
    g: &mut Graph<F>,
    hidden: Var,
    strategy: PoolingStrategy,
    pad_mask: &[bool],
) -> Result<Var> {
    let t = g.shape(hidden)[0];
    let rows = non_pad_rows(t, pad_mask);
    let last = *rows.last().ok_or(ModelError::AllPad)?;
    Ok(match strategy {
        PoolingStrategy::LastToken => g.gather_rows(hidden, &[last])?,
        PoolingStrategy::Mean => g.mean_rows(hidden, &rows)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{BOS, PAD};

    fn small() -> ModelConfig {
        ModelConfig {
            hidden_dim: 16,
            n_heads: 2,
            head_dim: 8,
            ffn_dim: 24,
            max_seq_len: 32,
            ..ModelConfig::desk()
        }
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::desk().validate().is_ok());
        let bad = ModelConfig {
            hidden_dim: 63,
            ..ModelConfig::desk()
        };
        assert!(bad.validate().is_err());
        let tiny_vocab = ModelConfig {
            vocab_size: 258,
            ..ModelConfig::desk()
        };
        assert!(tiny_vocab.validate().is_err());
    }

    #[test]
    fn mask_shapes() {
        let c = build_attention_mask(AttentionMode::Causal, 3, &[]);
        assert_eq!(
            c.allow,
            vec![true, false, false, true, true, false, true, true, true]
        );
        let b = build_attention_mask(AttentionMode::Bidirectional, 3, &[]);
        assert!(b.allow.iter().all(|&a| a));
        let p = build_attention_mask(AttentionMode::Bidirectional, 3, &[false, false, true]);
        for q in 0..3 {
            assert!(!p.allows(q, 2));
            assert!(p.allows(q, 0) && p.allows(q, 1));
        }
        let cp = build_attention_mask(AttentionMode::Causal, 3, &[false, true, false]);
        assert!(!cp.allows(2, 1) && cp.allows(2, 2));
    }

    #[test]
    fn single_token_modes_agree() {
        let m = Transformer::<f64>::new(small(), 3).unwrap();
        let a = m.forward(&[BOS], AttentionMode::Causal).unwrap();
        let b = m.forward(&[BOS], AttentionMode::Bidirectional).unwrap();
        assert!(a.logits.bit_eq(&b.logits));
    }

    #[test]
    fn causal_prefix_is_unchanged_by_future_tokens() {
        let m = Transformer::<f32>::new(small(), 5).unwrap();
        let base = [BOS, 10, 20, 30, 40, 50];
        let mut pert = base;
        pert[3] = 99;
        let a = m.forward(&base, AttentionMode::Causal).unwrap();
        let b = m.forward(&pert, AttentionMode::Causal).unwrap();
        for l in 0..2 {
            for i in 0..3 {
                assert_eq!(
                    a.hidden_states[l].row(i).unwrap(),
                    b.hidden_states[l].row(i).unwrap()
                );
            }
        }
        let a = m.forward(&base, AttentionMode::Bidirectional).unwrap();
        let b = m.forward(&pert, AttentionMode::Bidirectional).unwrap();
        assert_ne!(
            a.final_hidden.row(0).unwrap(),
            b.final_hidden.row(0).unwrap()
        );
    }

    #[test]
    fn rejects_bad_tokens() {
        let m = Transformer::<f32>::new(small(), 1).unwrap();
        assert!(matches!(
            m.forward(&[BOS, 300], AttentionMode::Causal),
            Err(ModelError::TokenOutOfRange { pos: 1, id: 300, .. })
        ));
        assert!(matches!(
            m.forward(&vec![1; 33], AttentionMode::Causal),
            Err(ModelError::TooLong { .. })
        ));
    }

    #[test]
    fn tied_embeddings_share_one_tensor() {
        let cfg = ModelConfig {
            tie_embeddings: true,
            ..small()
        };
        let mut m = Transformer::<f64>::new(cfg, 2).unwrap();
        assert!(m.param("backbone.lm_head").is_none());
        let before = m.forward(&[BOS, 5], AttentionMode::Causal).unwrap();
        // row 7 of the embedding is also row 7 of the output projection
        let embed = m.params_mut().get_mut("backbone.embed").unwrap();
        let h = 16;
        embed.data_mut()[7 * h..8 * h].iter_mut().for_each(|v| *v += 1.0);
        let after = m.forward(&[BOS, 5], AttentionMode::Causal).unwrap();
        let v = 260;
        assert_ne!(before.logits.data()[v + 7], after.logits.data()[v + 7]);
        assert_eq!(before.logits.data()[v + 8], after.logits.data()[v + 8]);
    }

    #[test]
    fn pooling_cases() {
        let h = Tensor::<f64>::from_f64([2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pool(&h, PoolingStrategy::Mean, &[]).unwrap().data(), &[2.0, 3.0]);
        assert_eq!(pool(&h, PoolingStrategy::LastToken, &[]).unwrap().data(), &[3.0, 4.0]);
        let hp = Tensor::<f64>::from_f64([2, 2], &[1.0, 2.0, 9.0, 9.0]).unwrap();
        assert_eq!(
            pool(&hp, PoolingStrategy::Mean, &[false, true]).unwrap().data(),
            &[1.0, 2.0]
        );
        assert!(matches!(
            pool(&hp, PoolingStrategy::Mean, &[true, true]),
            Err(ModelError::AllPad)
        ));
    }

    #[test]
    fn mean_pooling_ignores_trailing_pad() {
        let m = Transformer::<f64>::new(small(), 9).unwrap();
        let toks = [BOS, 1, 2, 3];
        let padded = [BOS, 1, 2, 3, PAD, PAD];
        let a = m
            .embed(&toks, AttentionMode::Bidirectional, PoolingStrategy::Mean)
            .unwrap();
        let b = m
            .embed(&padded, AttentionMode::Bidirectional, PoolingStrategy::Mean)
            .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = Transformer::<f32>::new(small(), 42).unwrap();
        let b = Transformer::<f32>::new(small(), 42).unwrap();
        let c = Transformer::<f32>::new(small(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
