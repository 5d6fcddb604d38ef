//! Seeded synthetic languages.
//!
//! Each domain is a first-order Markov chain over a small alphabet drawn
//! from [`PLAIN`]. Its transition rows come from a hash of the domain name,
//! so a domain keeps the same statistics across corpora and seeds. Contrastive
//! positives are a fixed substitution [`cipher`] into the disjoint
//! [`CIPHERED`] alphabet, so matching anchors to positives has to be learned.
//! The substitution is shared by every domain; domains differ only in which
//! characters they use and how they follow each other.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::{CorpusError, DomainStream, PairSample, Record, Result};

/// Characters an anchor may use.
pub const PLAIN: &str = "abcdefghijklmnopqrstuvwxyz0123456789+-*/=()";
/// Characters a ciphered text uses. Disjoint from [`PLAIN`], same size.
pub const CIPHERED: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZ!#$%&<>?@[]^_{}|~";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Plain text records for masked or causal objectives.
    Masking,
    /// `(anchor, positive, hard negatives)` records.
    Contrastive,
}

impl std::str::FromStr for SynthKind {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "masking" => Ok(Self::Masking),
            "contrastive" => Ok(Self::Contrastive),
            _ => Err(CorpusError::Invalid(format!(
                "unknown corpus kind {s:?} (expected masking or contrastive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub min_len: usize,
    pub max_len: usize,
    /// Hard negatives per contrastive sample, at most 7.
    pub hard_negatives: usize,
    /// Per-character substitution rate applied to positives.
    pub positive_noise: f64,
    /// Share of anchor characters resampled to build a near miss.
    pub near_miss_rate: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            min_len: 16,
            max_len: 32,
            hard_negatives: 3,
            positive_noise: 0.05,
            near_miss_rate: 0.4,
        }
    }
}

impl SynthOptions {
    fn validate(&self) -> Result<()> {
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(CorpusError::Invalid(format!(
                "bad length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        if self.hard_negatives > 7 {
            return Err(CorpusError::Invalid("at most 7 hard negatives".into()));
        }
        for (name, p) in [("positive_noise", self.positive_noise), ("near_miss_rate", self.near_miss_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorpusError::Invalid(format!("{name} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn preset_alphabet(domain: &str) -> Option<&'static str> {
    Some(match domain {
        super::ENGLISH => "etaoinshrdlu",
        super::MULTILINGUAL => "aeiouzxqkjwvy",
        super::MATH => "0123456789+-*/=x",
        super::CODE => "fdeirntx01()=*",
        _ => return None,
    })
}

/// A domain's alphabet and transition probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGrammar {
    pub domain: String,
    pub alphabet: Vec<char>,
    /// Initial-symbol distribution.
    pub start: Vec<f64>,
    /// Row `i` is the next-symbol distribution after `alphabet[i]`.
    pub transitions: Vec<Vec<f64>>,
}

impl DomainGrammar {
    /// Concentration of the per-row Dirichlet draw. Small values give
    /// peaked, learnable rows.
    const CONCENTRATION: f64 = 0.3;
    const DERIVED_ALPHABET: usize = 12;

    pub fn for_domain(domain: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(domain));
        let alphabet: Vec<char> = match preset_alphabet(domain) {
            Some(a) => a.chars().collect(),
            None => {
                let mut pool: Vec<char> = PLAIN.chars().collect();
                pool.shuffle(&mut rng);
                pool.truncate(Self::DERIVED_ALPHABET);
                pool
            }
        };
        let gamma = Gamma::new(Self::CONCENTRATION, 1.0).expect("valid gamma");
        let row = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let raw: Vec<f64> = (0..alphabet.len()).map(|_| gamma.sample(rng) + 1e-6).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        };
        let start = vec![1.0 / alphabet.len() as f64; alphabet.len()];
        let transitions = (0..alphabet.len()).map(|_| row(&mut rng)).collect();
        Self {
            domain: domain.to_string(),
            alphabet,
            start,
            transitions,
        }
    }

    fn draw(dist: &[f64], rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in dist.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        dist.len() - 1
    }

    pub fn sample(&self, len: usize, rng: &mut impl Rng) -> String {
        let mut out = String::with_capacity(len);
        let mut cur = Self::draw(&self.start, rng);
        for i in 0..len {
            if i > 0 {
                cur = Self::draw(&self.transitions[cur], rng);
            }
            out.push(self.alphabet[cur]);
        }
        out
    }
}

fn cipher_table() -> Vec<char> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a("cipher"));
    let mut table: Vec<char> = CIPHERED.chars().collect();
    table.shuffle(&mut rng);
    table
}

/// Substitution of [`PLAIN`] characters into [`CIPHERED`] ones. Other
/// characters pass through.
pub fn cipher(text: &str) -> String {
    let table = cipher_table();
    text.chars()
        .map(|c| PLAIN.chars().position(|p| p == c).map_or(c, |i| table[i]))
        .collect()
}

/// Character-level Levenshtein distance.
pub fn edit_distance(a: &str, b: &str) -> usize {
    strsim::levenshtein(a, b)
}

fn perturb(text: &str, rate: f64, pool: &[char], rng: &mut impl Rng) -> String {
    text.chars()
        .map(|c| {
            if rng.random::<f64>() < rate {
                pool[rng.random_range(0..pool.len())]
            } else {
                c
            }
        })
        .collect()
}

/// One stream per domain, `size` records each, provenance `<domain>-synth`.
pub fn synth_corpus(kind: SynthKind, domains: &[&str], size: usize, seed: u64) -> Result<Vec<DomainStream>> {
    synth_corpus_with(kind, domains, size, seed, &SynthOptions::default())
}

pub fn synth_corpus_with(
    kind: SynthKind,
    domains: &[&str],
    size: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<Vec<DomainStream>> {
    if size == 0 {
        return Err(CorpusError::Invalid("corpus size must be at least 1".into()));
    }
    opts.validate()?;
    let ciphered: Vec<char> = CIPHERED.chars().collect();
    domains
        .iter()
        .map(|&domain| {
            if domain.trim().is_empty() {
                return Err(CorpusError::Invalid("empty domain tag".into()));
            }
            let grammar = DomainGrammar::for_domain(domain);
            let kind_tag = match kind {
                SynthKind::Masking => 1,
                SynthKind::Contrastive => 2,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(domain).rotate_left(kind_tag));
            let records = (0..size)
                .map(|_| {
                    let len = rng.random_range(opts.min_len..=opts.max_len);
                    let anchor = grammar.sample(len, &mut rng);
                    match kind {
                        SynthKind::Masking => Record::text(anchor),
                        SynthKind::Contrastive => {
                            let positive =
                                perturb(&cipher(&anchor), opts.positive_noise, &ciphered, &mut rng);
                            let negatives = (0..opts.hard_negatives)
                                .map(|_| {
                                    let near = perturb(&anchor, opts.near_miss_rate, &grammar.alphabet, &mut rng);
                                    cipher(&near)
                                })
                                .collect();
                            Record::pair(PairSample {
                                anchor,
                                positive,
                                negatives,
                            })
                        }
                    }
                })
                .collect();
            Ok(DomainStream::new(domain, format!("{domain}-synth"), records))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::collections::BTreeMap;

    #[test]
    fn alphabets_are_disjoint_and_equal_size() {
        assert_eq!(PLAIN.chars().count(), CIPHERED.chars().count());
        assert!(PLAIN.chars().all(|c| !CIPHERED.contains(c)));
        for d in ["english", "multilingual", "math", "code", "legal"] {
            let g = DomainGrammar::for_domain(d);
            assert!(g.alphabet.iter().all(|c| PLAIN.contains(*c)), "{d}");
            for row in &g.transitions {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        for kind in [SynthKind::Masking, SynthKind::Contrastive] {
            let a = synth_corpus(kind, &["english", "math"], 50, 9).unwrap();
            assert_eq!(a, synth_corpus(kind, &["english", "math"], 50, 9).unwrap());
            assert_ne!(a, synth_corpus(kind, &["english", "math"], 50, 10).unwrap());
        }
    }

    #[test]
    fn cipher_is_a_bijection() {
        let plain: String = PLAIN.chars().collect();
        let c = cipher(&plain);
        let mut seen: Vec<char> = c.chars().collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), PLAIN.len());
        assert!(c.chars().all(|ch| CIPHERED.contains(ch)));
        assert_eq!(cipher("a b"), format!("{} {}", cipher("a"), cipher("b")));
    }

    // One character per record, from the middle, so samples are independent.
    fn char_counts(stream: &DomainStream) -> BTreeMap<char, f64> {
        let mut m = BTreeMap::new();
        for t in stream.texts() {
            let c = t.chars().nth(t.chars().count() / 2).unwrap();
            *m.entry(c).or_insert(0.0) += 1.0;
        }
        m
    }

    // Chi-squared test of homogeneity on the 2 x |symbols| count table.
    fn homogeneity_p(a: &BTreeMap<char, f64>, b: &BTreeMap<char, f64>) -> f64 {
        let symbols: Vec<char> = a.keys().chain(b.keys()).copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let na: f64 = a.values().sum();
        let nb: f64 = b.values().sum();
        let n = na + nb;
        let mut stat = 0.0;
        for s in &symbols {
            let oa = a.get(s).copied().unwrap_or(0.0);
            let ob = b.get(s).copied().unwrap_or(0.0);
            let col = oa + ob;
            for (o, row) in [(oa, na), (ob, nb)] {
                let e = row * col / n;
                stat += (o - e).powi(2) / e;
            }
        }
        let df = (symbols.len() - 1) as f64;
        1.0 - ChiSquared::new(df).unwrap().cdf(stat)
    }

    #[test]
    fn domains_are_distinguishable() {
        let streams = synth_corpus(SynthKind::Masking, &["english", "multilingual", "math", "code", "legal"], 1000, 42).unwrap();
        for i in 0..streams.len() {
            for j in i + 1..streams.len() {
                let p = homogeneity_p(&char_counts(&streams[i]), &char_counts(&streams[j]));
                assert!(p < 0.01, "{} vs {}: p = {p}", streams[i].domain(), streams[j].domain());
            }
        }
        // two draws of one domain are not flagged
        let a = synth_corpus(SynthKind::Masking, &["english"], 1000, 1).unwrap();
        let b = synth_corpus(SynthKind::Masking, &["english"], 1000, 2).unwrap();
        assert!(homogeneity_p(&char_counts(&a[0]), &char_counts(&b[0])) > 0.01);
    }

    #[test]
    fn positive_beats_hard_negatives_under_edit_distance() {
        let opts = SynthOptions {
            hard_negatives: 7,
            ..Default::default()
        };
        for d in ["english", "math", "code"] {
            let s = synth_corpus_with(SynthKind::Contrastive, &[d], 1000, 42, &opts).unwrap();
            let mut wins = 0;
            for p in s[0].pairs() {
                let target = cipher(&p.anchor);
                let dp = edit_distance(&target, &p.positive);
                if p.negatives.iter().all(|n| dp < edit_distance(&target, n)) {
                    wins += 1;
                }
                assert!(p.negatives.len() == 7);
            }
            assert!(wins as f64 >= 0.95 * 1000.0, "{d}: {wins}");
        }
    }

    #[test]
    fn bad_arguments() {
        assert!(synth_corpus(SynthKind::Masking, &["english"], 0, 1).is_err());
        let opts = SynthOptions {
            hard_negatives: 8,
            ..Default::default()
        };
        assert!(synth_corpus_with(SynthKind::Contrastive, &["english"], 1, 1, &opts).is_err());
        assert!("other".parse::<SynthKind>().is_err());
    }
}
