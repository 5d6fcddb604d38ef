//! Per-layer cosine similarity before and after a short MNTP run.

use bidir_adapt::corpus::{synth_corpus, SynthKind};
use bidir_adapt::experiments::desk_model_config;
use bidir_adapt::model::Transformer;
use bidir_adapt::trainkit::{train, Objective, TrainRecipe};
use bidir_adapt::weightops::{layer_similarity, Checkpoint};

fn main() {
    let corpus = synth_corpus(SynthKind::Masking, &["english"], 100, 42).unwrap();
    let base = Transformer::<f32>::new(desk_model_config(), 42).unwrap();
    let recipe = TrainRecipe {
        max_len: 40,
        ..TrainRecipe::new(Objective::Mntp).with_steps(60)
    };
    let adapted = train(&base, &recipe, &corpus).unwrap().model;
    let report = layer_similarity(&Checkpoint::from_model(&base), &Checkpoint::from_model(&adapted)).unwrap();
    print!("{}", report.to_table());
    println!("{}", serde_json::to_string(&report).unwrap());
}
