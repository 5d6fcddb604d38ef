//! Forgetting under domain shift, merge recovery and mixture retention
//! (a few minutes on one core).

use bidir_adapt::experiments::{run_domain_shift, DomainScores, DomainShiftConfig};

fn show(name: &str, s: &DomainScores) {
    println!("{name:10} A ndcg {:.3} acc {:.3} | B ndcg {:.3} acc {:.3}", s.a.ndcg, s.a.accuracy, s.b.ndcg, s.b.accuracy);
}

fn main() {
    let cfg = DomainShiftConfig::default();
    println!("A = {}, B = {}", cfg.domain_a, cfg.domain_b);
    let r = run_domain_shift(&cfg).expect("experiment runs");
    show("pre", &r.pre);
    show("adapted", &r.adapted);
    show("merged", &r.merged);
    println!("adaptation steps {}; A drop {:.3}; recovery {:.2}; B retention {:.2}", r.adapt_steps, r.drop(), r.recovery(), r.retention());
    for arm in &r.mixture {
        show(&format!("rho {}", arm.ratio), &arm.scores);
        println!("           A retention {:.3}", arm.retention(&r.pre));
    }
}
