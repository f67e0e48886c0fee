//! Relationship-count corpus and the pairwise co-occurrence prior it is
//! synthesized from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};

use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;

/// Relation labels emitted by the corpus generator.
pub const RELATION_LABELS: [&str; 4] = ["next to", "on", "near", "in"];

/// Poisson rate per relation label is `BASE_RATE + STRENGTH_RATE·strength`.
const BASE_RATE: f64 = 0.3;
const STRENGTH_RATE: f64 = 8.0;

/// Aggregated `(subject, relation, object) → count`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelationCounts {
    counts: BTreeMap<(usize, String, usize), u64>,
}

/// Side report of [`RelationCounts::ingest`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub records: usize,
    pub skipped_unknown: usize,
    pub unknown_names: BTreeSet<String>,
}

impl RelationCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, subject: usize, relation: &str, object: usize, count: u64) {
        *self
            .counts
            .entry((subject, relation.to_string(), object))
            .or_insert(0) += count;
    }

    pub fn get(&self, subject: usize, relation: &str, object: usize) -> u64 {
        self.counts
            .get(&(subject, relation.to_string(), object))
            .copied()
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str, usize, u64)> {
        self.counts
            .iter()
            .map(|((s, r, o), &c)| (*s, r.as_str(), *o, c))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Parses `subject TAB relation TAB object TAB count` lines, summing
    /// duplicates. Lines naming categories outside `vocab` are skipped and
    /// tallied in the report.
    pub fn ingest(text: &str, vocab: &Vocabulary, source_name: &str) -> Result<(Self, IngestReport)> {
        let mut counts = Self::new();
        let mut report = IngestReport::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [subject, relation, object, count] = fields[..] else {
                return Err(Error::parse(
                    source_name,
                    idx + 1,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            };
            let count: i64 = count.trim().parse().map_err(|_| {
                Error::parse(source_name, idx + 1, format!("bad count '{count}'"))
            })?;
            if count < 0 {
                return Err(Error::Value(format!(
                    "{source_name}:{}: negative count {count}",
                    idx + 1
                )));
            }
            report.records += 1;
            match (vocab.index_of(subject.trim()), vocab.index_of(object.trim())) {
                (Some(s), Some(o)) => counts.add(s, relation.trim(), o, count as u64),
                (s, o) => {
                    report.skipped_unknown += 1;
                    if s.is_none() {
                        report.unknown_names.insert(subject.trim().to_string());
                    }
                    if o.is_none() {
                        report.unknown_names.insert(object.trim().to_string());
                    }
                }
            }
        }
        Ok((counts, report))
    }

    pub fn to_tsv(&self, vocab: &Vocabulary) -> String {
        let mut out = String::from("# subject\trelation\tobject\tcount\n");
        for (s, r, o, c) in self.iter() {
            writeln!(out, "{}\t{}\t{}\t{}", vocab.name(s), r, vocab.name(o), c).unwrap();
        }
        out
    }
}

/// Symmetric pairwise placement strengths in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CooccurrencePrior {
    strength: Matrix,
}

impl CooccurrencePrior {
    pub fn empty(n: usize) -> Self {
        Self {
            strength: Matrix::zeros(n, n),
        }
    }

    pub fn set(&mut self, a: usize, b: usize, strength: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&strength) {
            return Err(Error::Value(format!("prior strength {strength} outside [0,1]")));
        }
        if a == b {
            return Err(Error::Value("prior pair must name two categories".into()));
        }
        self.strength.set(a, b, strength);
        self.strength.set(b, a, strength);
        Ok(())
    }

    pub fn strength(&self, a: usize, b: usize) -> f64 {
        self.strength.get(a, b)
    }

    pub fn len(&self) -> usize {
        self.strength.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unordered pairs with positive strength.
    pub fn pairs(&self) -> Vec<(usize, usize, f64)> {
        let n = self.len();
        let mut out = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let s = self.strength(a, b);
                if s > 0.0 {
                    out.push((a, b, s));
                }
            }
        }
        out
    }

    /// Built-in prior for [`Vocabulary::desk`]: each anchor is strongly
    /// linked to its two satellites, and satellites of one anchor to each
    /// other.
    pub fn desk(vocab: &Vocabulary) -> Self {
        let clusters = [
            ("fridge", "apple", "mango"),
            ("coffee_machine", "mug", "glass"),
            ("sink", "bowl", "plate"),
            ("stove", "pan", "pot"),
        ];
        let mut prior = Self::empty(vocab.len());
        let idx = |n: &str| vocab.index_of(n).expect("desk category");
        for (anchor, a, b) in clusters {
            prior.set(idx(anchor), idx(a), 0.9).unwrap();
            prior.set(idx(anchor), idx(b), 0.9).unwrap();
            prior.set(idx(a), idx(b), 0.8).unwrap();
        }
        prior
    }

    /// TSV `category_a  category_b  strength`.
    pub fn parse(text: &str, vocab: &Vocabulary, source_name: &str) -> Result<Self> {
        let mut prior = Self::empty(vocab.len());
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            let [a, b, s] = fields[..] else {
                return Err(Error::parse(source_name, idx + 1, "expected 3 tab-separated fields"));
            };
            let lookup = |n: &str| {
                vocab
                    .index_of(n)
                    .ok_or_else(|| Error::parse(source_name, idx + 1, format!("unknown category '{n}'")))
            };
            let s: f64 = s
                .parse()
                .map_err(|_| Error::parse(source_name, idx + 1, format!("bad strength '{s}'")))?;
            prior
                .set(lookup(a)?, lookup(b)?, s)
                .map_err(|e| Error::parse(source_name, idx + 1, e.to_string()))?;
        }
        Ok(prior)
    }

    pub fn to_tsv(&self, vocab: &Vocabulary) -> String {
        let mut out = String::from("# category_a\tcategory_b\tstrength\n");
        for (a, b, s) in self.pairs() {
            writeln!(out, "{}\t{}\t{}", vocab.name(a), vocab.name(b), s).unwrap();
        }
        out
    }

    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, vocab, &path.display().to_string())
    }
}

/// Samples a relationship-count corpus whose per-label counts follow
/// `Poisson(0.3 + 8·strength)` for every unordered category pair, with a
/// random subject/object orientation per label.
pub fn generate_corpus(vocab: &Vocabulary, prior: &CooccurrencePrior, seed: u64) -> RelationCounts {
    let mut rng = rng::rng_from(seed, &[rng::name_tag("corpus")]);
    let mut counts = RelationCounts::new();
    let n = vocab.len();
    for a in 0..n {
        for b in a + 1..n {
            let rate = BASE_RATE + STRENGTH_RATE * prior.strength(a, b);
            let poisson = Poisson::new(rate).expect("positive rate");
            for label in RELATION_LABELS {
                let c = poisson.sample(&mut rng) as u64;
                let (s, o) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                if c > 0 {
                    counts.add(s, label, o, c);
                }
            }
        }
    }
    counts
}
