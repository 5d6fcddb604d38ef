//! Learning-rate schedules and one AdamW step with clipping.

use std::collections::BTreeMap;

use bidir_adapt::tensor::Tensor;
use bidir_adapt::trainkit::{adamw_step, clip_grad_norm, lr_at, AdamWConfig, GradMap, OptimizerState, ScheduleSpec};

fn main() {
    let wsd = ScheduleSpec::wsd(2e-3, 100);
    let linear = ScheduleSpec::linear(1e-3, 10, 100);
    println!("step   wsd        linear");
    for step in [0, 5, 10, 25, 50, 80, 90, 95, 100] {
        println!("{step:4}   {:.2e}   {:.2e}", lr_at(&wsd, step), lr_at(&linear, step));
    }

    let mut params: BTreeMap<String, Tensor<f64>> = BTreeMap::new();
    params.insert("w".into(), Tensor::from_f64([3], &[1.0, -2.0, 0.5]).unwrap());
    let mut grads: GradMap<f64> = BTreeMap::new();
    grads.insert("w".into(), vec![3.0, 4.0, 0.0]);
    let clip = clip_grad_norm(&mut grads, 1.0);
    println!("grad norm {:.3}, scaled by {:.3} to {:?}", clip.norm, clip.scale, grads["w"]);
    let mut state = OptimizerState::new(AdamWConfig::default());
    adamw_step(&mut params, &grads, &mut state, lr_at(&wsd, 1)).unwrap();
    println!("after one step: {:?}", params["w"].data());
}
