//! Central finite-difference verification of autodiff gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::{Graph, Var};
use crate::model::{pad_mask, pool_graph, AttentionMode, ParamVars, PoolingStrategy, Transformer};
use crate::objectives::{apply_masking, infonce_graph, masked_loss_graph, ContrastiveConfig, MaskedObjective, MaskingSpec};
use crate::tensor::{Result, Tensor, TensorError};
use crate::vocab;

/// Knobs for [`check_gradients`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Magnitudes below this are compared absolutely: the relative error of
    /// a coordinate is `|a − n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    /// Check at most this many coordinates per tensor (seeded sample).
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-3,
            max_coords_per_tensor: None,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(tensor index, coordinate)` of the worst relative error.
    pub worst: Option<(usize, usize)>,
    pub coords_checked: usize,
    /// False when re-evaluating at the same point gave a different value.
    pub deterministic: bool,
    pub passed: bool,
}

fn evaluate<L>(f: &L, points: &[Tensor<f64>]) -> Result<f64>
where
    L: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = points.iter().map(|p| g.leaf(p)).collect();
    let out = f(&mut g, &vars)?;
    if g.value(out).len() != 1 {
        return Err(TensorError::Invalid(format!(
            "gradient check needs a scalar function, got shape {:?}",
            g.shape(out)
        )));
    }
    Ok(g.scalar(out))
}

/// Compares autodiff gradients of `f` at `points` against central
/// differences `(f(x+h) − f(x−h)) / 2h`, coordinate by coordinate.
pub fn check_gradients<L>(
    f: L,
    points: &[Tensor<f64>],
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    L: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let leaves: Vec<Tensor<f64>> = points.iter().map(|p| p.clone().requiring_grad()).collect();

    let first = evaluate(&f, &leaves)?;
    let again = evaluate(&f, &leaves)?;
    if first.to_bits() != again.to_bits() {
        return Ok(GradCheckReport {
            max_rel_error: f64::NAN,
            max_abs_error: f64::NAN,
            worst: None,
            coords_checked: 0,
            deterministic: false,
            passed: false,
        });
    }

    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|p| g.leaf(p)).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(&leaves)
        .map(|(&v, p)| {
            grads
                .get(v)
                .map(|s| s.to_vec())
                .unwrap_or_else(|| vec![0.0; p.numel()])
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        coords_checked: 0,
        deterministic: true,
        passed: true,
    };
    let mut probe = leaves.clone();
    for (ti, tensor) in leaves.iter().enumerate() {
        let n = tensor.numel();
        let coords: Vec<usize> = match opts.max_coords_per_tensor {
            Some(k) if k < n => {
                let mut c = index::sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for c in coords {
            let x = tensor.data()[c];
            probe[ti].data_mut()[c] = x + opts.step;
            let up = evaluate(&f, &probe)?;
            probe[ti].data_mut()[c] = x - opts.step;
            let down = evaluate(&f, &probe)?;
            probe[ti].data_mut()[c] = x;

            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic[ti][c];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(opts.floor);
            report.coords_checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst = Some((ti, c));
            }
        }
    }
    report.passed = report.max_rel_error < opts.tolerance;
    Ok(report)
}

/// Single-tensor form of [`check_gradients`].
pub fn finite_difference_check<L>(
    f: L,
    point: &Tensor<f64>,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    L: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let opts = GradCheckOptions {
        step,
        tolerance,
        ..Default::default()
    };
    check_gradients(|g, vars| f(g, vars[0]), std::slice::from_ref(point), opts)
}

/// Loss a model-level gradient check differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LossProbe {
    Mlm,
    Mntp,
    InfoNce,
}

impl LossProbe {
    pub const ALL: [LossProbe; 3] = [LossProbe::Mlm, LossProbe::Mntp, LossProbe::InfoNce];

    pub fn name(self) -> &'static str {
        match self {
            LossProbe::Mlm => "mlm",
            LossProbe::Mntp => "mntp",
            LossProbe::InfoNce => "infonce",
        }
    }
}

impl std::str::FromStr for LossProbe {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown loss {s:?} (expected mlm, mntp or infonce)"))
    }
}

fn random_tokens(rng: &mut ChaCha8Rng, len: usize, vocab_size: usize) -> Vec<usize> {
    use rand::Rng;
    std::iter::once(vocab::BOS)
        .chain((1..len).map(|_| rng.random_range(0..256.min(vocab_size))))
        .collect()
}

/// Checks the gradient of one loss with respect to every parameter of
/// `model`, on seeded random inputs in bidirectional mode.
pub fn model_gradcheck(
    model: &Transformer<f64>,
    loss: LossProbe,
    seq_len: usize,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let model_err = |e: crate::model::ModelError| TensorError::Invalid(e.to_string());
    let obj_err = |e: crate::objectives::ObjectiveError| TensorError::Invalid(e.to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let vocab_size = model.config().vocab_size;
    let mode = AttentionMode::Bidirectional;
    let names: Vec<String> = model.params().keys().cloned().collect();
    let points: Vec<Tensor<f64>> = model.params().values().cloned().collect();
    let bind = |vars: &[Var]| -> ParamVars { names.iter().cloned().zip(vars.iter().copied()).collect() };
    match loss {
        LossProbe::Mlm | LossProbe::Mntp => {
            let tokens = random_tokens(&mut rng, seq_len, vocab_size);
            let spec = MaskingSpec::new(0.3, opts.seed).map_err(obj_err)?;
            let outcome = apply_masking(&tokens, &spec).map_err(obj_err)?;
            let objective = if loss == LossProbe::Mlm {
                MaskedObjective::Mlm
            } else {
                MaskedObjective::Mntp
            };
            check_gradients(
                |g, vars| {
                    let out = model
                        .forward_graph(g, &bind(vars), &outcome.masked, mode, true)
                        .map_err(model_err)?;
                    let logits = out.logits.expect("logits requested");
                    masked_loss_graph(g, logits, &outcome, objective).map_err(obj_err)
                },
                &points,
                opts,
            )
        }
        LossProbe::InfoNce => {
            let seqs: Vec<Vec<usize>> = (0..6).map(|_| random_tokens(&mut rng, seq_len, vocab_size)).collect();
            let cfg = ContrastiveConfig::default();
            check_gradients(
                |g, vars| {
                    let pv = bind(vars);
                    let mut emb = Vec::new();
                    for s in &seqs {
                        let out = model.forward_graph(g, &pv, s, mode, false).map_err(model_err)?;
                        emb.push(
                            pool_graph(g, out.final_hidden, PoolingStrategy::Mean, &pad_mask(s))
                                .map_err(model_err)?,
                        );
                    }
                    // two anchors, their positives, one hard negative each
                    infonce_graph(g, &emb[0..2], &emb[2..4], &[vec![emb[4]], vec![emb[5]]], &cfg).map_err(obj_err)
                },
                &points,
                opts,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn sum_of_squares() {
        let x = Tensor::from_f64([3], &[1.0, 2.0, 3.0]).unwrap();
        let r = finite_difference_check(
            |g, v| {
                let sq = g.mul(v, v)?;
                Ok(g.sum(sq))
            },
            &x,
            1e-5,
            1e-7,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.max_rel_error < 1e-7);
        assert_eq!(r.coords_checked, 3);
    }

    #[test]
    fn constant_function() {
        let x = Tensor::from_f64([4], &[1.0, -1.0, 0.5, 2.0]).unwrap();
        let r = finite_difference_check(
            |g, _| g.constant([1], vec![7.0]),
            &x,
            1e-5,
            1e-7,
        )
        .unwrap();
        assert!(r.passed);
        assert_eq!(r.max_abs_error, 0.0);
    }

    #[test]
    fn nondeterministic_function_is_flagged() {
        let counter = Cell::new(0.0);
        let x = Tensor::from_f64([2], &[1.0, 2.0]).unwrap();
        let r = finite_difference_check(
            |g, v| {
                counter.set(counter.get() + 1.0);
                let noise = g.constant([2], vec![counter.get(), 0.0])?;
                let y = g.add(v, noise)?;
                Ok(g.sum(y))
            },
            &x,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(!r.deterministic);
        assert!(!r.passed);
    }

    #[test]
    fn every_primitive_passes() {
        // [2,3] input pushed through each recorded op once.
        let x = Tensor::from_f64([2, 3], &[0.3, -1.2, 0.7, 1.5, 0.2, -0.4]).unwrap();
        let w = Tensor::from_f64([3, 4], &[
            0.1, -0.2, 0.3, 0.5, -0.7, 0.2, 0.9, -0.3, 0.4, 0.6, -0.1, 0.8,
        ])
        .unwrap();
        let gain = Tensor::from_f64([4], &[1.1, 0.9, -0.5, 1.3]).unwrap();
        let cos = std::rc::Rc::new(vec![1.0, 0.8, 0.6, 0.3]);
        let sin = std::rc::Rc::new(vec![0.0, 0.6, 0.8, 0.95]);
        let r = check_gradients(
            |g, v| {
                let h = g.matmul(v[0], v[1])?;
                let n = g.rmsnorm(h, v[2], 1e-6)?;
                let r = g.rope(n, 4, cos.clone(), sin.clone())?;
                let s = g.silu(r);
                let a = g.slice_cols(s, 0, 2)?;
                let b = g.slice_cols(r, 2, 2)?;
                let ab = g.mul(a, b)?;
                let cat = g.concat_cols(&[ab, a])?;
                let sc = g.matmul_bt(cat, cat)?;
                let p = g.masked_softmax(sc, Some(&[true, false, true, true]))?;
                let pv = g.matmul(p, cat)?;
                let rows = g.concat_rows(&[pv, cat])?;
                let sel = g.gather_rows(rows, &[0, 3, 3])?;
                let nrm = g.l2_normalize_rows(sel)?;
                let m = g.mean_rows(nrm, &[0, 2])?;
                let logits = g.scale(nrm, 3.0);
                let ce = g.cross_entropy(logits, &[(0, 1), (2, 3)], None)?;
                let ms = g.sum(m);
                let total = g.add(ce, ms)?;
                Ok(total)
            },
            &[x, w, gain],
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn model_losses_pass_on_tiny_model() {
        let model = Transformer::<f64>::new(crate::model::ModelConfig::tiny(), 3).unwrap();
        let opts = GradCheckOptions {
            max_coords_per_tensor: Some(6),
            ..GradCheckOptions::default()
        };
        for loss in LossProbe::ALL {
            let r = model_gradcheck(&model, loss, 8, opts).unwrap();
            assert!(r.passed, "{}: {r:?}", loss.name());
        }
    }

    #[test]
    fn loss_names_parse() {
        for loss in LossProbe::ALL {
            assert_eq!(loss.name().parse::<LossProbe>().unwrap(), loss);
        }
        assert!("clm".parse::<LossProbe>().is_err());
    }
}
