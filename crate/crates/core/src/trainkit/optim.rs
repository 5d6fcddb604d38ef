use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::tensor::{Scalar, Tensor};

/// Per-parameter gradients keyed by parameter name.
pub type GradMap<F> = BTreeMap<String, Vec<F>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment estimates for every parameter that has received a gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F: Scalar> {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: BTreeMap<String, Vec<F>>,
    pub v: BTreeMap<String, Vec<F>>,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

/// One AdamW update. Parameters without an entry in `grads` are left
/// untouched, decay included. Non-finite gradients abort before anything
/// is modified.
pub fn adamw_step<F: Scalar>(
    params: &mut BTreeMap<String, Tensor<F>>,
    grads: &GradMap<F>,
    state: &mut OptimizerState<F>,
    lr: f64,
) -> Result<()> {
    let next = state.step + 1;
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| TrainError::Recipe(format!("gradient for unknown parameter {name}")))?;
        if p.numel() != g.len() {
            return Err(TrainError::Recipe(format!(
                "gradient for {name} has {} entries, parameter has {}",
                g.len(),
                p.numel()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(TrainError::NonFinite {
                step: next,
                what: format!("gradient of {name}"),
            });
        }
    }
    state.step = next;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(next as i32);
    let bc2 = 1.0 - c.beta2.powi(next as i32);
    let decay = 1.0 - lr * c.weight_decay;
    for (name, g) in grads {
        let p = params.get_mut(name).expect("checked above").data_mut();
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![F::zero(); g.len()]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![F::zero(); g.len()]);
        for i in 0..g.len() {
            let gi = g[i].as_f64();
            let mi = c.beta1 * m[i].as_f64() + (1.0 - c.beta1) * gi;
            let vi = c.beta2 * v[i].as_f64() + (1.0 - c.beta2) * gi * gi;
            m[i] = F::of(mi);
            v[i] = F::of(vi);
            let update = (mi / bc1) / ((vi / bc2).sqrt() + c.eps);
            p[i] = F::of(p[i].as_f64() * decay - lr * update);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClipReport {
    /// Global L2 norm before clipping.
    pub norm: f64,
    /// Factor applied to every gradient (1 when not clipped).
    pub scale: f64,
}

/// Rescales all gradients together when their global L2 norm exceeds
/// `max_norm`.
pub fn clip_grad_norm<F: Scalar>(grads: &mut GradMap<F>, max_norm: f64) -> ClipReport {
    let norm = grads
        .values()
        .flat_map(|g| g.iter())
        .map(|x| x.as_f64() * x.as_f64())
        .sum::<f64>()
        .sqrt();
    let scale = if norm > max_norm { max_norm / norm } else { 1.0 };
    if scale < 1.0 {
        for g in grads.values_mut() {
            for x in g.iter_mut() {
                *x = F::of(x.as_f64() * scale);
            }
        }
    }
    ClipReport { norm, scale }
}
