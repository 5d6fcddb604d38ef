//! Average normalized rank over a small task × model grid.

use bidir_adapt::evalkit::{normalized_rank, EvalRecord};

fn main() {
    let grid = [
        ("retrieval", [("base", 0.41), ("mntp", 0.55), ("contrastive", 0.72)]),
        ("sts", [("base", 0.30), ("mntp", 0.36), ("contrastive", 0.61)]),
        ("masked", [("base", -4.1), ("mntp", -2.2), ("contrastive", -2.9)]),
    ];
    let records: Vec<EvalRecord> = grid
        .iter()
        .flat_map(|(task, row)| row.iter().map(move |(m, s)| EvalRecord::new(*task, *m, *s)))
        .collect();
    let table = normalized_rank(&records).unwrap();
    print!("{}", table.to_tsv());
    println!("best first: {:?}", table.ordering());
}
