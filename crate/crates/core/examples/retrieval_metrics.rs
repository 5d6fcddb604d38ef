//! Evaluation metrics on hand-made inputs.

use std::collections::BTreeSet;

use bidir_adapt::evalkit::{accuracy, ema, macro_f1, ndcg_at_k, spearman};

fn main() {
    let ranked = ["d3", "d1", "d7", "d2"];
    let relevant: BTreeSet<&str> = ["d1", "d2"].into_iter().collect();
    let n = ndcg_at_k(&ranked, &relevant, 10).unwrap();
    println!("ndcg@10 {:.4} (undefined: {})", n.value, n.undefined);

    let gold = [0.1, 0.4, 0.35, 0.8];
    let predicted = [1.0, 2.0, 3.0, 4.0];
    println!("spearman {:.4}", spearman(&predicted, &gold).unwrap());

    let labels = ["pos", "neg", "pos", "neg", "pos"];
    let preds = ["pos", "pos", "pos", "neg", "neg"];
    println!("accuracy {:.4}  macro-F1 {:.4}", accuracy(&preds, &labels).unwrap(), macro_f1(&preds, &labels).unwrap());

    let curve = [3.0, 2.5, 2.7, 2.1, 1.9];
    let smooth: Vec<String> = ema(&curve, 0.4).unwrap().iter().map(|x| format!("{x:.3}")).collect();
    println!("ema(0.4) {}", smooth.join(" "));
}
