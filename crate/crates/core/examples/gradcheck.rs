//! Finite-difference check of every loss on a small float64 model.

use bidir_adapt::gradcheck::{model_gradcheck, GradCheckOptions, LossProbe};
use bidir_adapt::model::{ModelConfig, Transformer};

fn main() {
    let model = Transformer::<f64>::new(ModelConfig::desk(), 42).expect("desk config is valid");
    let opts = GradCheckOptions {
        max_coords_per_tensor: Some(32),
        ..GradCheckOptions::default()
    };
    println!("{} parameters, {} sampled per tensor", model.num_params(), 32);
    for loss in LossProbe::ALL {
        let r = model_gradcheck(&model, loss, 12, opts).expect("losses evaluate");
        println!(
            "{:8} max rel {:.2e}  max abs {:.2e}  coords {:5}  {}",
            loss.name(),
            r.max_rel_error,
            r.max_abs_error,
            r.coords_checked,
            if r.passed { "ok" } else { "FAILED" }
        );
    }
}
