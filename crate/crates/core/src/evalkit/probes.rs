use std::collections::{BTreeSet, HashMap};

use crate::corpus::PairSample;
use crate::model::{AttentionMode, PoolingStrategy, Transformer};
use crate::objectives::{apply_masking, cosine, mlm_loss, mntp_loss, MaskedObjective, MaskingSpec};
use crate::tensor::Scalar;
use crate::vocab;

use super::metrics::ndcg_at_k;
use super::Result;

/// Mean per-token masked loss over `texts`, with a fixed mask per text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedProbe {
    pub mean_loss: f64,
    pub scored_tokens: usize,
}

pub fn masked_probe<F: Scalar>(
    model: &Transformer<F>,
    texts: &[&str],
    objective: MaskedObjective,
    mode: AttentionMode,
    mask_ratio: f64,
    seed: u64,
    max_len: usize,
) -> Result<MaskedProbe> {
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, text) in texts.iter().enumerate() {
        let tokens = vocab::encode(text, max_len);
        let spec = MaskingSpec::new(mask_ratio, seed.wrapping_add(i as u64))?;
        let outcome = apply_masking(&tokens, &spec)?;
        let out = model.forward(&outcome.masked, mode)?;
        let loss = match objective {
            MaskedObjective::Mlm => mlm_loss(&out, &outcome)?,
            MaskedObjective::Mntp => mntp_loss(&out, &outcome)?,
        };
        sum += loss.sum;
        count += loss.count;
    }
    Ok(MaskedProbe {
        mean_loss: if count == 0 { 0.0 } else { sum / count as f64 },
        scored_tokens: count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalReport {
    /// Share of queries whose own positive is ranked first.
    pub accuracy: f64,
    /// Mean NDCG@10 with the query's positive as the only relevant document.
    pub ndcg_at_10: f64,
    pub queries: usize,
}

/// Embedding retrieval over groups of `group_size` queries. Each query ranks
/// the positives of its group plus every hard negative in the group by
/// cosine similarity.
pub fn retrieval_eval<F: Scalar>(
    model: &Transformer<F>,
    pairs: &[PairSample],
    mode: AttentionMode,
    pooling: PoolingStrategy,
    group_size: usize,
    max_len: usize,
) -> Result<RetrievalReport> {
    let mut cache: HashMap<String, Vec<f64>> = HashMap::new();
    let mut embed = |s: &str| -> Result<Vec<f64>> {
        if let Some(e) = cache.get(s) {
            return Ok(e.clone());
        }
        let e: Vec<f64> = model
            .embed(&vocab::encode(s, max_len), mode, pooling)?
            .iter()
            .map(|x| x.as_f64())
            .collect();
        cache.insert(s.to_string(), e.clone());
        Ok(e)
    };
    let (mut hits, mut ndcg, mut n) = (0usize, 0.0, 0usize);
    for group in pairs.chunks(group_size.max(1)) {
        let docs: Vec<&str> = group
            .iter()
            .map(|p| p.positive.as_str())
            .chain(group.iter().flat_map(|p| p.negatives.iter().map(String::as_str)))
            .collect();
        let doc_emb: Vec<Vec<f64>> = docs.iter().map(|d| embed(d)).collect::<Result<_>>()?;
        for (qi, q) in group.iter().enumerate() {
            let qe = embed(&q.anchor)?;
            let sims: Vec<f64> = doc_emb.iter().map(|d| cosine(&qe, d)).collect::<std::result::Result<_, _>>()?;
            let mut order: Vec<usize> = (0..docs.len()).collect();
            // Ties rank the target last so a constant encoder scores no hits.
            order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then((a == qi).cmp(&(b == qi))));
            hits += usize::from(order[0] == qi);
            ndcg += ndcg_at_k(&order, &BTreeSet::from([qi]), 10)?.value;
            n += 1;
        }
    }
    Ok(RetrievalReport {
        accuracy: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
        ndcg_at_10: if n == 0 { 0.0 } else { ndcg / n as f64 },
        queries: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn masked_probe_is_deterministic() {
        let m = Transformer::<f64>::new(ModelConfig::tiny(), 3).unwrap();
        let texts = ["abcabcabc", "hello world"];
        let a = masked_probe(&m, &texts, MaskedObjective::Mntp, AttentionMode::Bidirectional, 0.3, 1, 16).unwrap();
        let b = masked_probe(&m, &texts, MaskedObjective::Mntp, AttentionMode::Bidirectional, 0.3, 1, 16).unwrap();
        assert_eq!(a, b);
        assert!(a.scored_tokens > 0 && a.mean_loss > 0.0);
    }

    #[test]
    fn identical_texts_are_retrieved() {
        let m = Transformer::<f64>::new(ModelConfig::tiny(), 3).unwrap();
        let pairs: Vec<PairSample> = ["aaaa", "zq9+", "hello"]
            .iter()
            .map(|s| PairSample {
                anchor: s.to_string(),
                positive: s.to_string(),
                negatives: vec![],
            })
            .collect();
        let r = retrieval_eval(&m, &pairs, AttentionMode::Bidirectional, PoolingStrategy::Mean, 3, 16).unwrap();
        assert_eq!(r.queries, 3);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.ndcg_at_10, 1.0);
    }
}
