use std::collections::BTreeSet;
use std::hash::Hash;

use super::{EvalError, Result};

/// Exponential moving average with `α` weighting the newest observation:
/// `s_0 = x_0`, `s_t = α·x_t + (1 − α)·s_{t−1}`.
pub fn ema(series: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(EvalError::Invalid(format!("ema alpha {alpha} outside (0, 1]")));
    }
    let mut out = Vec::with_capacity(series.len());
    for (t, &x) in series.iter().enumerate() {
        out.push(if t == 0 { x } else { alpha * x + (1.0 - alpha) * out[t - 1] });
    }
    Ok(out)
}

/// Default smoothing factor for loss curves.
pub const EMA_ALPHA: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ndcg {
    pub value: f64,
    /// The relevant set was empty, so the score is undefined and reported as 0.
    pub undefined: bool,
}

/// Binary-relevance NDCG@k with gain `1 / log2(rank + 1)`.
pub fn ndcg_at_k<T: Eq + Hash + Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Result<Ndcg> {
    if k == 0 {
        return Err(EvalError::Invalid("ndcg cutoff k must be at least 1".into()));
    }
    if relevant.is_empty() {
        return Ok(Ndcg { value: 0.0, undefined: true });
    }
    let gain = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let mut seen = BTreeSet::new();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, d)| relevant.contains(*d) && seen.insert(*d))
        .map(|(i, _)| gain(i + 1))
        .sum();
    let ideal: f64 = (1..=relevant.len().min(k)).map(gain).sum();
    Ok(Ndcg { value: dcg / ideal, undefined: false })
}

fn aligned<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(EvalError::Length { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(EvalError::Invalid("empty inputs".into()));
    }
    Ok(())
}

pub fn accuracy<T: PartialEq>(predictions: &[T], labels: &[T]) -> Result<f64> {
    aligned(predictions, labels)?;
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean per-class F1 over every class seen in either predictions or labels.
/// A class with no true positives scores 0.
pub fn macro_f1<T: Ord + Clone>(predictions: &[T], labels: &[T]) -> Result<f64> {
    aligned(predictions, labels)?;
    let classes: BTreeSet<&T> = predictions.iter().chain(labels).collect();
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (p, l) in predictions.iter().zip(labels) {
                match (p == c, l == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            if tp == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            }
        })
        .sum();
    Ok(total / classes.len() as f64)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    aligned(x, y)?;
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EvalError::Invalid("spearman inputs must be finite".into()));
    }
    let distinct = |v: &[f64]| v.iter().any(|a| *a != v[0]);
    if !distinct(x) || !distinct(y) {
        return Err(EvalError::Invalid("spearman needs at least two distinct values per side".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
