use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, DomainStream, Result};

/// A primary domain plus a share `ρ` split equally across extra domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub primary: String,
    pub multi_domain_ratio: f64,
    pub multi_domains: Vec<String>,
}

impl MixtureSpec {
    pub const DEFAULT_RATIO: f64 = 0.20;

    pub fn new(primary: impl Into<String>, ratio: f64, multi: &[&str]) -> Result<Self> {
        let spec = Self {
            primary: primary.into(),
            multi_domain_ratio: ratio,
            multi_domains: multi.iter().map(|s| s.to_string()).collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn pure(primary: impl Into<String>) -> Self {
        Self {
            primary: primary.into(),
            multi_domain_ratio: 0.0,
            multi_domains: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.multi_domain_ratio) {
            return Err(CorpusError::Mixture(format!(
                "ratio {} outside [0, 1]",
                self.multi_domain_ratio
            )));
        }
        if self.multi_domain_ratio > 0.0 && self.multi_domains.is_empty() {
            return Err(CorpusError::Mixture(
                "positive multi-domain ratio with no multi-domain streams".into(),
            ));
        }
        Ok(())
    }

    /// Expected share of each slot: primary first, then the extra domains.
    pub fn shares(&self) -> Vec<f64> {
        let k = self.multi_domains.len();
        let mut out = vec![1.0 - self.multi_domain_ratio];
        out.extend(std::iter::repeat_n(self.multi_domain_ratio / k.max(1) as f64, k));
        out
    }

    /// Domain names in slot order.
    pub fn domains(&self) -> Vec<&str> {
        std::iter::once(self.primary.as_str())
            .chain(self.multi_domains.iter().map(String::as_str))
            .collect()
    }
}

/// Seeded categorical draw of `n` slots (0 = primary, `i` = extra domain
/// `i − 1`). The uniforms are stratified over `[0, 1)` and then shuffled:
/// every slot is marginally a plain categorical draw, while the totals stay
/// within one sample of their expectation.
pub fn mix_domains(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Vec<usize>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = spec.multi_domains.len();
    let primary_share = 1.0 - spec.multi_domain_ratio;
    let per = spec.multi_domain_ratio / k.max(1) as f64;
    let mut uniforms: Vec<f64> = (0..n)
        .map(|i| (i as f64 + rng.random::<f64>()) / n as f64)
        .collect();
    uniforms.shuffle(&mut rng);
    Ok(uniforms
        .into_iter()
        .map(|u| {
            if u < primary_share || k == 0 {
                0
            } else {
                1 + (((u - primary_share) / per) as usize).min(k - 1)
            }
        })
        .collect())
}

/// Interleaves text records from `streams` per `spec`. Returns
/// `(stream index, record index)` pairs; each domain is read in a seeded
/// shuffled order that is reshuffled after every pass.
pub fn mix(
    spec: &MixtureSpec,
    streams: &[DomainStream],
    n: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let slots = mix_domains(spec, n, seed)?;
    let shares = spec.shares();
    // every record of a domain, across all streams carrying that tag
    let mut pools: Vec<Vec<(usize, usize)>> = Vec::new();
    for (slot, domain) in spec.domains().into_iter().enumerate() {
        let pool: Vec<(usize, usize)> = streams
            .iter()
            .enumerate()
            .filter(|(_, s)| s.domain() == domain)
            .flat_map(|(si, s)| {
                s.records
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.as_text().is_some())
                    .map(move |(ri, _)| (si, ri))
            })
            .collect();
        if pool.is_empty() && shares[slot] > 0.0 {
            return Err(CorpusError::EmptyStream(domain.to_string()));
        }
        pools.push(pool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut orders: Vec<Vec<(usize, usize)>> = pools.clone();
    for o in orders.iter_mut() {
        o.shuffle(&mut rng);
    }
    let mut cursor = vec![0usize; pools.len()];
    let mut out = Vec::with_capacity(n);
    for slot in slots {
        if cursor[slot] == orders[slot].len() {
            orders[slot].shuffle(&mut rng);
            cursor[slot] = 0;
        }
        out.push(orders[slot][cursor[slot]]);
        cursor[slot] += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Record;

    fn counts(spec: &MixtureSpec, n: usize, seed: u64) -> Vec<usize> {
        let mut c = vec![0; spec.multi_domains.len() + 1];
        for s in mix_domains(spec, n, seed).unwrap() {
            c[s] += 1;
        }
        c
    }

    #[test]
    fn zero_ratio_is_pure_primary() {
        let spec = MixtureSpec::new("english", 0.0, &["math"]).unwrap();
        assert_eq!(counts(&spec, 1000, 1), vec![1000, 0]);
    }

    #[test]
    fn full_ratio_single_domain() {
        let spec = MixtureSpec::new("english", 1.0, &["code"]).unwrap();
        assert_eq!(counts(&spec, 1000, 1), vec![0, 1000]);
    }

    #[test]
    fn twenty_percent_split_three_ways() {
        let spec = MixtureSpec::new("english", 0.2, &["multilingual", "math", "code"]).unwrap();
        let c = counts(&spec, 30_000, 42);
        for &k in &c[1..] {
            assert!((k as f64 - 2000.0).abs() <= 0.02 * 2000.0, "{c:?}");
        }
    }

    #[test]
    fn large_sample_converges() {
        let spec = MixtureSpec::new("english", 0.2, &["multilingual", "math", "code"]).unwrap();
        let n = 100_000;
        let c = counts(&spec, n, 7);
        for (k, share) in c.iter().zip(spec.shares()) {
            let got = *k as f64 / n as f64;
            assert!((got - share).abs() <= 0.01 * share, "{got} vs {share}");
        }
    }

    #[test]
    fn ratio_without_streams_is_rejected() {
        assert!(MixtureSpec::new("english", 0.2, &[]).is_err());
        assert!(MixtureSpec::new("english", 1.5, &["x"]).is_err());
    }

    #[test]
    fn mix_reads_records_and_is_seeded() {
        let streams = vec![
            DomainStream::new("english", "e", (0..5).map(|i| Record::text(format!("e{i}"))).collect()),
            DomainStream::new("math", "m", (0..3).map(|i| Record::text(format!("m{i}"))).collect()),
        ];
        let spec = MixtureSpec::new("english", 0.5, &["math"]).unwrap();
        let a = mix(&spec, &streams, 50, 3).unwrap();
        assert_eq!(a, mix(&spec, &streams, 50, 3).unwrap());
        assert!(a.iter().any(|&(s, _)| s == 1));
        let missing = MixtureSpec::new("english", 0.5, &["code"]).unwrap();
        assert!(matches!(
            mix(&missing, &streams, 10, 3),
            Err(CorpusError::EmptyStream(d)) if d == "code"
        ));
    }
}
