//! Synthetic domain corpora: text and contrastive pairs, plus a mixture.

use bidir_adapt::corpus::{cipher, mix_domains, synth_corpus, MixtureSpec, SynthKind};

fn main() {
    let domains = ["english", "multilingual", "math", "code"];
    let text = synth_corpus(SynthKind::Masking, &domains, 100, 42).unwrap();
    for s in &text {
        println!("{:13} {:3} records  e.g. {:?}", s.domain(), s.len(), s.texts().next().unwrap());
    }

    let pairs = synth_corpus(SynthKind::Contrastive, &["english"], 3, 42).unwrap();
    for p in pairs[0].pairs() {
        println!("anchor {:?}\n  positive {:?}\n  {} hard negatives, first {:?}", p.anchor, p.positive, p.negatives.len(), p.negatives[0]);
    }
    println!("cipher(\"x = 2+2\") = {:?}", cipher("x = 2+2"));

    let spec = MixtureSpec::new("english", 0.2, &["multilingual", "math", "code"]).unwrap();
    let draws = mix_domains(&spec, 1000, 42).unwrap();
    let names = spec.domains();
    for (i, name) in names.iter().enumerate() {
        let n = draws.iter().filter(|&&d| d == i).count();
        println!("{name:13} {n:4} of 1000 batches (target {:.3})", spec.shares()[i]);
    }
}
