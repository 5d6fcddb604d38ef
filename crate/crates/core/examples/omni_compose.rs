//! Merge three backbones equally and attach two frozen modality heads.

use bidir_adapt::experiments::desk_model_config;
use bidir_adapt::model::{AttentionMode, Transformer};
use bidir_adapt::tensor::DType;
use bidir_adapt::vocab;
use bidir_adapt::weightops::{compose, Checkpoint, HeadSource, MergeRecipe, StoredTensor};

fn specialist(seed: u64, head: Option<&str>) -> Checkpoint {
    let mut ck = Checkpoint::from_model(&Transformer::<f32>::new(desk_model_config(), seed).unwrap());
    if let Some(m) = head {
        let w: Vec<f64> = (0..32 * 64).map(|i| ((i as f64) * 0.37).sin()).collect();
        ck.insert(format!("head.{m}.proj"), StoredTensor::from_f64(vec![32, 64], &w, DType::F32).unwrap())
            .unwrap();
    }
    ck
}

fn main() {
    let backbones = MergeRecipe::equal(vec![specialist(1, None), specialist(2, None), specialist(3, None)]);
    let heads = vec![
        HeadSource { checkpoint: specialist(4, Some("vision")), modality: "vision".into(), label: "vision-encoder".into() },
        HeadSource { checkpoint: specialist(5, Some("speech")), modality: "speech".into(), label: "speech-encoder".into() },
    ];
    let omni = compose(&backbones, &heads).unwrap();
    println!("{} tensors", omni.len());
    for (k, v) in omni.metadata.iter().filter(|(k, _)| k.starts_with("provenance")) {
        println!("{k} = {v}");
    }
    let model = omni.to_model::<f32>().unwrap();
    let out = model.forward(&vocab::encode("one backbone, two heads", 40), AttentionMode::Bidirectional).unwrap();
    println!("forward ok: hidden {:?}", out.final_hidden.shape());
}
