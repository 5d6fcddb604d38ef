//! Save, reload and inspect a checkpoint; corrupted bytes are rejected.

use bidir_adapt::model::{ModelConfig, Transformer};
use bidir_adapt::weightops::Checkpoint;

fn main() {
    let model = Transformer::<f32>::new(ModelConfig::tiny(), 1).unwrap();
    let mut ck = Checkpoint::from_model(&model);
    ck.metadata.insert("note".into(), "example".into());
    let dir = std::env::temp_dir().join("bidir-checkpoint-io");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("tiny.ckpt");
    ck.save(&path).unwrap();

    let back = Checkpoint::load(&path).unwrap();
    println!("{} tensors, {} bytes, bit-exact {}", back.len(), std::fs::metadata(&path).unwrap().len(), back.bit_eq(&ck));
    for (name, t) in back.tensors().iter().take(4) {
        println!("  {name:32} {:?} {:?}", t.dtype(), t.shape());
    }
    let rebuilt = back.to_model::<f32>().unwrap();
    println!("rebuilt model has {} parameters", rebuilt.num_params());

    let mut bytes = ck.to_bytes();
    bytes.truncate(bytes.len() - 3);
    match Checkpoint::from_bytes(&bytes) {
        Err(e) => println!("truncated file rejected [{}]: {e}", e.kind()),
        Ok(_) => println!("truncated file accepted"),
    }
}
