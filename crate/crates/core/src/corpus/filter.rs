use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use super::{CorpusError, DomainStream, Result};

/// Lowercase and strip everything but ASCII alphanumerics, so `PAWS-X`,
/// `paws_x` and `pawsx` compare equal.
pub fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Reads a plain-text list: one entry per line, `#` starts a comment.
pub fn read_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_list(&text))
}

pub(crate) fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Families excluded from training, plus the source priority used by
/// [`dedup_priority`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Blocklist {
    families: BTreeSet<String>,
    pub priority: Vec<String>,
}

impl Blocklist {
    pub fn new<I, S>(families: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            families: families
                .into_iter()
                .map(|f| normalize_name(f.as_ref()))
                .filter(|f| !f.is_empty())
                .collect(),
            priority: Vec::new(),
        }
    }

    pub fn with_priority<I, S>(mut self, order: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.priority = order.into_iter().map(|s| normalize_name(s.as_ref())).collect();
        self
    }

    pub fn families(&self) -> impl Iterator<Item = &str> {
        self.families.iter().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    pub fn blocks(&self, stream: &DomainStream) -> bool {
        self.families.contains(&normalize_name(&stream.family))
            || self.families.contains(&normalize_name(&stream.provenance))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DecontaminationReport {
    /// `(provenance, record count)` of every dropped stream.
    pub dropped: Vec<(String, usize)>,
}

/// Drops whole streams whose family (or full provenance) is blocklisted.
pub fn decontaminate(
    streams: Vec<DomainStream>,
    blocklist: &Blocklist,
) -> (Vec<DomainStream>, DecontaminationReport) {
    let mut report = DecontaminationReport::default();
    let kept = streams
        .into_iter()
        .filter(|s| {
            if blocklist.blocks(s) {
                report.dropped.push((s.provenance.clone(), s.len()));
                false
            } else {
                true
            }
        })
        .collect();
    (kept, report)
}

/// Within a family offered by several sources, keeps only the copies from
/// the highest-priority source. Sources missing from `priority` rank last;
/// among equally ranked copies the first is kept.
pub fn dedup_priority(streams: Vec<DomainStream>, priority: &[String]) -> Vec<DomainStream> {
    let rank = |s: &DomainStream| -> usize {
        let src = s.source.as_deref().map(normalize_name).unwrap_or_default();
        priority
            .iter()
            .position(|p| normalize_name(p) == src)
            .unwrap_or(priority.len())
    };
    let mut best: BTreeMap<String, usize> = BTreeMap::new();
    for s in &streams {
        let r = rank(s);
        best.entry(normalize_name(&s.family))
            .and_modify(|b| *b = (*b).min(r))
            .or_insert(r);
    }
    let mut taken = BTreeSet::new();
    streams
        .into_iter()
        .filter(|s| {
            let fam = normalize_name(&s.family);
            rank(s) == best[&fam] && taken.insert(fam)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Record;

    fn stream(prov: &str) -> DomainStream {
        DomainStream::new("english", prov, vec![Record::text("x")])
    }

    #[test]
    fn list_parsing_skips_comments() {
        assert_eq!(parse_list("# header\npawsx\n  mnli # trailing\n\n"), vec!["pawsx", "mnli"]);
    }

    #[test]
    fn empty_blocklist_is_identity() {
        let input = vec![stream("a-kalm"), stream("b-nemo")];
        let (kept, report) = decontaminate(input.clone(), &Blocklist::default());
        assert_eq!(kept, input);
        assert!(report.dropped.is_empty());
    }

    #[test]
    fn family_match_drops_every_source() {
        let (kept, report) = decontaminate(
            vec![stream("pawsx-kalm"), stream("pawsx-nemo"), stream("mnli-kalm")],
            &Blocklist::new(["pawsx"]),
        );
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].provenance, "mnli-kalm");
        assert_eq!(report.dropped.len(), 2);
    }

    #[test]
    fn names_normalize() {
        let (kept, _) = decontaminate(vec![stream("PAWS-X"), stream("paws_x-kalm")], &Blocklist::new(["pawsx"]));
        assert!(kept.is_empty());
        let (kept, _) = decontaminate(vec![stream("pawsx")], &Blocklist::new(["PAWS-X"]));
        assert!(kept.is_empty());
    }

    #[test]
    fn decontamination_is_idempotent() {
        let bl = Blocklist::new(["pawsx", "xnli"]);
        let input = vec![stream("pawsx-kalm"), stream("xnli"), stream("squad-nemo")];
        let (once, _) = decontaminate(input, &bl);
        let (twice, report) = decontaminate(once.clone(), &bl);
        assert_eq!(once, twice);
        assert!(report.dropped.is_empty());
    }

    #[test]
    fn nemo_first() {
        let prio = vec!["nemo".to_string(), "kalm".to_string()];
        let kept = dedup_priority(vec![stream("msmarco-kalm"), stream("msmarco-nemo")], &prio);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].provenance, "msmarco-nemo");

        let kept = dedup_priority(vec![stream("gooaq-kalm")], &prio);
        assert_eq!(kept.len(), 1);

        let kept = dedup_priority(vec![stream("a-kalm"), stream("b-nemo")], &prio);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn at_most_one_source_per_family() {
        let prio = vec!["nemo".to_string()];
        let kept = dedup_priority(
            vec![stream("f-x"), stream("f-y"), stream("f-x"), stream("g-y")],
            &prio,
        );
        let f: Vec<_> = kept.iter().filter(|s| s.family == "f").collect();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].source.as_deref(), Some("x"));
    }
}
