//! The five adaptation variants on synthetic data (a few minutes on one core).

use bidir_adapt::experiments::{run_taxonomy, TaxonomyConfig};

fn main() {
    let report = run_taxonomy(&TaxonomyConfig::default()).expect("taxonomy runs");
    println!("{:24} {:>10} {:>9} {:>8} {:>6}", "variant", "probe loss", "retr acc", "ndcg@10", "rank");
    for s in &report.variants {
        println!(
            "{:24} {:10.4} {:9.3} {:8.3} {:6.3}",
            s.variant,
            s.probe_loss,
            s.retrieval_accuracy,
            s.retrieval_ndcg,
            report.ranks.mean_rank(&s.variant).unwrap()
        );
    }
    println!("MNTP probe-loss gain over Bi+Base: {:.1}%", 100.0 * report.mntp_gain());
    print!("{}", report.ranks.to_tsv());
    println!("elapsed {:.0?}", report.elapsed);
}
