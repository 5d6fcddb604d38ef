//! Short MNTP run from a random desk model on a synthetic corpus, with the
//! smoothed loss curve.

use bidir_adapt::corpus::{synth_corpus, SynthKind};
use bidir_adapt::evalkit::{ema, EMA_ALPHA};
use bidir_adapt::experiments::desk_model_config;
use bidir_adapt::model::Transformer;
use bidir_adapt::trainkit::{train, Objective, TrainRecipe};

fn main() {
    let corpus = synth_corpus(SynthKind::Masking, &["english", "code"], 200, 42).unwrap();
    let init = Transformer::<f32>::new(desk_model_config(), 42).unwrap();
    let recipe = TrainRecipe {
        max_len: 40,
        ..TrainRecipe::new(Objective::Mntp).with_steps(300)
    };
    let out = train(&init, &recipe, &corpus).expect("training runs");
    let losses: Vec<f64> = out.curve.iter().map(|p| p.loss).collect();
    let smooth = ema(&losses, EMA_ALPHA).unwrap();
    for p in out.curve.iter().step_by(30) {
        println!("step {:4}  lr {:.2e}  loss {:.4}  smoothed {:.4}", p.step, p.lr, p.loss, smooth[p.step - 1]);
    }
    let (first, last) = (smooth[0], smooth[smooth.len() - 1]);
    println!("smoothed loss {first:.3} -> {last:.3} ({:.0}% of initial)", 100.0 * last / first);
    println!("batch plan {}", out.plan_fingerprint);
}
