//! Interpolate an adapted checkpoint back toward its base, and average three.

use bidir_adapt::model::{ModelConfig, Transformer};
use bidir_adapt::weightops::{layer_similarity, merge_many, merge_pair, Checkpoint, MergeRecipe};

fn main() {
    let ck = |seed| Checkpoint::from_model(&Transformer::<f32>::new(ModelConfig::tiny(), seed).unwrap());
    let (base, adapted) = (ck(1), ck(2));
    for r in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let m = merge_pair(&adapted, &base, r).unwrap();
        let to_base = layer_similarity(&m, &base).unwrap().mean;
        let to_adapted = layer_similarity(&m, &adapted).unwrap().mean;
        println!("base ratio {r:.2}: cosine to base {to_base:.3}, to adapted {to_adapted:.3}");
    }

    let soup = merge_many(&MergeRecipe::equal(vec![ck(1), ck(2), ck(3)])).unwrap();
    for (k, v) in soup.metadata.iter().filter(|(k, _)| k.starts_with("provenance")) {
        println!("{k} = {v}");
    }
    match merge_many(&MergeRecipe::new(vec![(ck(1), 0.5), (ck(2), 0.4)])) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => println!("accepted"),
    }
}
