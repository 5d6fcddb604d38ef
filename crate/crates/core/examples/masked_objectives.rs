//! Mask a sequence and score it with MLM (row i) and MNTP (row i − 1).

use bidir_adapt::model::{AttentionMode, ModelConfig, Transformer};
use bidir_adapt::objectives::{apply_masking, mlm_loss, mntp_loss, scoring_pairs, MaskedObjective, MaskingSpec};
use bidir_adapt::vocab;

fn main() {
    let tokens = vocab::encode("the quick brown fox jumps", 64);
    let spec = MaskingSpec::new(0.2, 42).unwrap();
    let outcome = apply_masking(&tokens, &spec).unwrap();
    println!("original: {}", vocab::decode(&outcome.original));
    let shown: String = outcome
        .masked
        .iter()
        .skip(1)
        .map(|&t| if t == vocab::MASK { '_' } else { vocab::decode(&[t]).chars().next().unwrap_or('?') })
        .collect();
    println!("masked:   {shown}");
    println!("positions {:?}", outcome.positions);
    for objective in [MaskedObjective::Mlm, MaskedObjective::Mntp] {
        let rows: Vec<usize> = scoring_pairs(&outcome, objective).unwrap().iter().map(|p| p.0).collect();
        println!("{objective:?} reads logit rows {rows:?}");
    }

    let model = Transformer::<f32>::new(ModelConfig::desk(), 7).unwrap();
    let out = model.forward(&outcome.masked, AttentionMode::Bidirectional).unwrap();
    let (mlm, mntp) = (mlm_loss(&out, &outcome).unwrap(), mntp_loss(&out, &outcome).unwrap());
    println!("untrained model: mlm {:.4}/token, mntp {:.4}/token, ln V = {:.4}", mlm.mean, mntp.mean, (vocab::DEFAULT_VOCAB as f64).ln());
}
