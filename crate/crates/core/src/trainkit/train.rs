use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::batches::{plan_batches, Batch, ContrastiveBatch, TextItem};
use super::optim::{adamw_step, clip_grad_norm, GradMap, OptimizerState};
use super::recipe::{Objective, TrainRecipe};
use super::schedule::lr_at;
use super::{Result, TrainError};
use crate::autograd::{Graph, Var};
use crate::corpus::DomainStream;
use crate::model::{pad_mask, pool_graph, ParamVars, Transformer};
use crate::objectives::{apply_masking, infonce_graph, scoring_pairs, MaskingSpec};
use crate::vocab;

/// One optimizer step of a loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    /// 1-based update index.
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

pub struct TrainOutcome {
    pub model: Transformer<f32>,
    pub curve: Vec<LossPoint>,
    /// Fingerprint of the batch plan that was consumed.
    pub plan_fingerprint: String,
}

pub fn write_loss_curve(path: &Path, curve: &[LossPoint]) -> Result<()> {
    let io = |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for p in curve {
        writeln!(w, "{}", serde_json::to_string(p).expect("loss point serializes")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_loss_curve(path: &Path) -> Result<Vec<LossPoint>> {
    let io = |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| TrainError::Recipe(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut z: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

fn collect_grads(grads: &crate::autograd::Gradients<f32>, vars: &ParamVars, into: &mut GradMap<f32>) {
    for (name, &v) in vars {
        if let Some(g) = grads.get(v) {
            match into.get_mut(name) {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += *b),
                None => {
                    into.insert(name.clone(), g.to_vec());
                }
            }
        }
    }
}

/// Token-level batch: one graph per sequence, loss normalised by the total
/// number of scored positions in the batch.
fn text_batch(
    model: &Transformer<f32>,
    recipe: &TrainRecipe,
    items: &[TextItem],
    seed: u64,
    weight: f64,
    grads: &mut GradMap<f32>,
) -> Result<f64> {
    let mut work: Vec<(Vec<usize>, Vec<(usize, usize)>)> = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let tokens = vocab::encode(&item.text, recipe.max_len);
        match recipe.objective.masked() {
            Some(objective) => {
                let spec = MaskingSpec::new(recipe.mask_ratio, mix_seed(&[seed, i as u64]))?;
                let outcome = apply_masking(&tokens, &spec)?;
                let pairs = scoring_pairs(&outcome, objective)?;
                work.push((outcome.masked, pairs));
            }
            None => {
                let pairs = (1..tokens.len()).map(|i| (i - 1, tokens[i])).collect();
                work.push((tokens, pairs));
            }
        }
    }
    let total: usize = work.iter().map(|(_, p)| p.len()).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let mut loss = 0.0;
    for (tokens, pairs) in work.iter().filter(|(_, p)| !p.is_empty()) {
        let mut g = Graph::new();
        let vars = model.register(&mut g);
        let out = model.forward_graph(&mut g, &vars, tokens, recipe.mode, true)?;
        let sum = g.cross_entropy(out.logits.expect("logits requested"), pairs, None)?;
        loss += g.scalar(sum) as f64 / total as f64;
        let scaled = g.scale(sum, weight / total as f64);
        collect_grads(&g.backward(scaled)?, &vars, grads);
    }
    Ok(loss)
}

fn embed_text(
    g: &mut Graph<f32>,
    vars: &ParamVars,
    model: &Transformer<f32>,
    recipe: &TrainRecipe,
    text: &str,
) -> Result<Var> {
    let tokens = vocab::encode(text, recipe.max_len);
    let out = model.forward_graph(g, vars, &tokens, recipe.mode, false)?;
    Ok(pool_graph(g, out.final_hidden, recipe.pooling(), &pad_mask(&tokens))?)
}

/// Pair batch: a single graph, mean InfoNCE over anchors.
fn contrastive_batch(
    model: &Transformer<f32>,
    recipe: &TrainRecipe,
    batch: &ContrastiveBatch,
    weight: f64,
    grads: &mut GradMap<f32>,
) -> Result<f64> {
    let mut g = Graph::new();
    let vars = model.register(&mut g);
    let mut anchors = Vec::new();
    let mut positives = Vec::new();
    let mut hard = Vec::new();
    for s in batch.prefixed() {
        anchors.push(embed_text(&mut g, &vars, model, recipe, &s.anchor)?);
        positives.push(embed_text(&mut g, &vars, model, recipe, &s.positive)?);
        hard.push(
            s.negatives
                .iter()
                .map(|n| embed_text(&mut g, &vars, model, recipe, n))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let mean = infonce_graph(&mut g, &anchors, &positives, &hard, &recipe.contrastive)?;
    let loss = g.scalar(mean) as f64;
    let scaled = g.scale(mean, weight);
    collect_grads(&g.backward(scaled)?, &vars, grads);
    Ok(loss)
}

/// Runs `recipe` from `init` over `corpus`. Each update: forward in the
/// recipe's attention mode, objective, global-norm clipping, AdamW at
/// `lr_at(step + 1)`. A non-finite loss or gradient stops the run with the
/// weights from before the failing update.
pub fn train(init: &Transformer<f32>, recipe: &TrainRecipe, corpus: &[DomainStream]) -> Result<TrainOutcome> {
    recipe.validate()?;
    let plan = plan_batches(corpus, recipe, recipe.seed)?;
    let mut model = init.clone();
    let mut state = OptimizerState::new(recipe.optimizer);
    let mut curve = Vec::with_capacity(recipe.steps);
    let weight = 1.0 / recipe.grad_accum as f64;
    for step in 0..recipe.steps {
        let lr = lr_at(&recipe.schedule, step + 1);
        let mut grads = GradMap::new();
        let mut loss = 0.0;
        for micro in 0..recipe.grad_accum {
            let index = step * recipe.grad_accum + micro;
            loss += weight
                * match &plan.batches[index] {
                    Batch::Text(items) => text_batch(
                        &model,
                        recipe,
                        items,
                        mix_seed(&[recipe.seed, index as u64]),
                        weight,
                        &mut grads,
                    )?,
                    Batch::Contrastive(b) => contrastive_batch(&model, recipe, b, weight, &mut grads)?,
                };
        }
        let diverged = |what: String| TrainError::Diverged {
            step: step + 1,
            what,
            last_good: Box::new(model.clone()),
            curve: curve.clone(),
        };
        if !loss.is_finite() {
            return Err(diverged(format!("loss {loss}")));
        }
        clip_grad_norm(&mut grads, recipe.max_grad_norm);
        let before = model.clone();
        if let Err(e) = adamw_step(model.params_mut(), &grads, &mut state, lr) {
            return Err(match e {
                TrainError::NonFinite { what, .. } => TrainError::Diverged {
                    step: step + 1,
                    what,
                    last_good: Box::new(before),
                    curve,
                },
                other => other,
            });
        }
        if step % 50 == 0 || step + 1 == recipe.steps {
            log::info!("{} step {}/{} loss {loss:.4} lr {lr:.2e}", recipe.objective, step + 1, recipe.steps);
        }
        curve.push(LossPoint {
            step: step + 1,
            loss,
            lr,
        });
    }
    Ok(TrainOutcome {
        model,
        curve,
        plan_fingerprint: plan.fingerprint,
    })
}

/// True when the corpus holds the record kind `objective` consumes.
pub fn corpus_supports(corpus: &[DomainStream], objective: Objective) -> bool {
    match objective {
        Objective::Contrastive => corpus.iter().any(|s| s.pairs().next().is_some()),
        _ => corpus.iter().any(|s| s.texts().next().is_some()),
    }
}
