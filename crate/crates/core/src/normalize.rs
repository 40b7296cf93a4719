//! Value cleaning, fingerprint keys and cluster tables.
//!
//! Cleaning drops bracketed (uncertain) values and trailing ISBD
//! punctuation. Clustering groups cleaned values whose fingerprint keys
//! collide and picks the most frequent spelling as the canonical form.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, BufRead, Read, Write};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::marc::RawPublisherPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Place,
    Name,
}

impl Role {
    pub fn prefix(self) -> &'static str {
        match self {
            Role::Place => "place:",
            Role::Name => "name:",
        }
    }
}

/// Trailing ISBD punctuation stripped from catalogued values.
pub const ISBD_TRAILING: [char; 5] = [':', ';', ',', '/', '='];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Error)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    #[error("bracketed")]
    Bracketed,
    #[error("empty_after_clean")]
    EmptyAfterClean,
}

/// A trimmed, non-empty, bracket-free value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CleanValue {
    text: String,
    role: Role,
}

impl CleanValue {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn into_text(self) -> String {
        self.text
    }
}

pub fn clean_value(raw: &str, role: Role) -> Result<CleanValue, Rejection> {
    let no_ctrl: String = raw.chars().filter(|c| !c.is_ascii_control()).collect();
    let trimmed = no_ctrl.trim();
    if trimmed.contains(['[', ']']) {
        return Err(Rejection::Bracketed);
    }
    let stripped = trimmed.trim_end_matches(|c: char| c.is_whitespace() || ISBD_TRAILING.contains(&c));
    let text = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
    if text.is_empty() {
        return Err(Rejection::EmptyAfterClean);
    }
    Ok(CleanValue { text, role })
}

static PUNCT_OR_CONTROL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[[\p{P}\p{Cc}[:punct:]]&&\S]").expect("static regex"));

/// Normalized clustering key: folded, accent-free, punctuation-free, unique
/// tokens in ascending order separated by single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FingerprintKey(String);

impl FingerprintKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for FingerprintKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Fingerprint key collision keyer.
///
/// trim, case-fold, NFKD, drop combining marks, drop punctuation and control
/// characters, split on whitespace, dedupe, sort, join. Whitespace control
/// characters (tab, newline) separate tokens like a space instead of being
/// dropped. Case folding uses the
/// Unicode compatibility-caseless form so that characters whose decomposition
/// introduces capitals (e.g. U+2121) still fold to lowercase.
pub fn fingerprint(value: &str) -> FingerprintKey {
    let folded = compatibility_fold(value.trim());
    let unmarked: String = folded.chars().filter(|&c| !is_combining_mark(c)).collect();
    let bare = PUNCT_OR_CONTROL.replace_all(&unmarked, "");
    let tokens: BTreeSet<&str> = bare.split_whitespace().collect();
    FingerprintKey(tokens.into_iter().collect::<Vec<_>>().join(" "))
}

/// NFKD(fold(NFKD(fold(NFD(s))))): the Unicode compatibility caseless
/// match normal form.
fn compatibility_fold(s: &str) -> String {
    let nfd: String = s.nfd().collect();
    let once: String = caseless::default_case_fold_str(&nfd).nfkd().collect();
    caseless::default_case_fold_str(&once).nfkd().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub canonical: String,
    /// Variants ordered by descending count, then ascending text.
    pub variants: Vec<(String, u64)>,
}

/// Fingerprint key → cluster, for one value population (places or names).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterTable {
    clusters: BTreeMap<FingerprintKey, Cluster>,
}

#[derive(Debug, Error)]
pub enum ClusterCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {reason}")]
    Invalid { line: u64, reason: String },
}

impl ClusterTable {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Number of distinct cleaned values across all clusters.
    pub fn value_count(&self) -> usize {
        self.clusters.values().map(|c| c.variants.len()).sum()
    }

    pub fn get(&self, key: &FingerprintKey) -> Option<&Cluster> {
        self.clusters.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FingerprintKey, &Cluster)> {
        self.clusters.iter()
    }

    /// Canonical form for an arbitrary value, via its fingerprint.
    pub fn canonical_for(&self, value: &str) -> Option<&str> {
        self.clusters.get(&fingerprint(value)).map(|c| c.canonical.as_str())
    }

    fn from_counts(counts: HashMap<String, u64>) -> Self {
        let mut grouped: BTreeMap<FingerprintKey, Vec<(String, u64)>> = BTreeMap::new();
        for (text, count) in counts {
            grouped.entry(fingerprint(&text)).or_default().push((text, count));
        }
        let clusters = grouped
            .into_iter()
            .map(|(key, mut variants)| {
                variants.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                let canonical = variants[0].0.clone();
                (key, Cluster { canonical, variants })
            })
            .collect();
        ClusterTable { clusters }
    }

    /// CSV rows `fingerprint,canonical,variant,count`, sorted by key then
    /// variant rank.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["fingerprint", "canonical", "variant", "count"])?;
        for (key, cluster) in &self.clusters {
            for (variant, count) in &cluster.variants {
                out.write_record([key.as_str(), &cluster.canonical, variant, &count.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, ClusterCsvError> {
        #[derive(Deserialize)]
        struct Row {
            fingerprint: String,
            canonical: String,
            variant: String,
            count: u64,
        }
        let mut counts = HashMap::new();
        let mut canonicals: HashMap<String, String> = HashMap::new();
        let mut reader = csv::Reader::from_reader(r);
        for row in reader.deserialize::<Row>() {
            let row = row?;
            let line = counts.len() as u64 + 2;
            let key = fingerprint(&row.variant);
            if key.as_str() != row.fingerprint {
                return Err(ClusterCsvError::Invalid {
                    line,
                    reason: format!("variant {:?} does not fingerprint to {:?}", row.variant, row.fingerprint),
                });
            }
            if row.count == 0 {
                return Err(ClusterCsvError::Invalid { line, reason: "count must be at least 1".into() });
            }
            canonicals.insert(row.fingerprint, row.canonical);
            if counts.insert(row.variant.clone(), row.count).is_some() {
                return Err(ClusterCsvError::Invalid { line, reason: format!("duplicate variant {:?}", row.variant) });
            }
        }
        let table = Self::from_counts(counts);
        for (key, cluster) in &table.clusters {
            if canonicals.get(key.as_str()) != Some(&cluster.canonical) {
                return Err(ClusterCsvError::Invalid {
                    line: 0,
                    reason: format!("canonical for {:?} is not its most frequent variant", key.as_str()),
                });
            }
        }
        Ok(table)
    }
}

/// Partial value counts; merge is associative and commutative, so any split
/// of the corpus across workers reduces to the same table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValueCounts(HashMap<String, u64>);

impl ValueCounts {
    pub fn add(&mut self, value: &CleanValue, count: u64) {
        *self.0.entry(value.text.clone()).or_insert(0) += count;
    }

    pub fn merge(self, other: ValueCounts) -> ValueCounts {
        let (mut big, small) = if self.0.len() >= other.0.len() { (self, other) } else { (other, self) };
        for (k, v) in small.0 {
            *big.0.entry(k).or_insert(0) += v;
        }
        big
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_table(self) -> ClusterTable {
        ClusterTable::from_counts(self.0)
    }
}

/// Group cleaned values by fingerprint key.
pub fn build_clusters<'a>(values: impl IntoIterator<Item = (&'a CleanValue, u64)>) -> ClusterTable {
    let mut counts = ValueCounts::default();
    for (value, count) in values {
        counts.add(value, count);
    }
    counts.into_table()
}

/// Canonical item set derived from one record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transaction {
    /// Sorted and unique.
    items: Vec<String>,
    pub record_id: String,
}

impl Transaction {
    /// Returns `None` when `items` is empty.
    pub fn new(items: impl IntoIterator<Item = String>, record_id: impl Into<String>) -> Option<Self> {
        let set: BTreeSet<String> = items.into_iter().collect();
        if set.is_empty() {
            return None;
        }
        Some(Transaction { items: set.into_iter().collect(), record_id: record_id.into() })
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

impl AsRef<[String]> for Transaction {
    fn as_ref(&self) -> &[String] {
        &self.items
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CanonicalizeOptions {
    /// Prefix items with `place:` / `name:`.
    pub role_prefix: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalizeStats {
    pub pairs: u64,
    pub pairs_rejected: u64,
    pub values_rejected: u64,
    pub transactions: u64,
}

/// Turns a record-ordered pair stream into transactions, merging
/// consecutive pairs that share a record id.
pub struct Canonicalizer<'a> {
    places: &'a ClusterTable,
    names: &'a ClusterTable,
    options: CanonicalizeOptions,
    current: Option<(String, BTreeSet<String>)>,
    stats: CanonicalizeStats,
}

impl<'a> Canonicalizer<'a> {
    pub fn new(places: &'a ClusterTable, names: &'a ClusterTable, options: CanonicalizeOptions) -> Self {
        Canonicalizer { places, names, options, current: None, stats: CanonicalizeStats::default() }
    }

    fn map(&self, value: CleanValue) -> String {
        let table = match value.role {
            Role::Place => self.places,
            Role::Name => self.names,
        };
        let canonical = table.canonical_for(&value.text).map(str::to_string).unwrap_or(value.text);
        if self.options.role_prefix {
            format!("{}{}", value.role.prefix(), canonical)
        } else {
            canonical
        }
    }

    /// Feed one pair; returns a finished transaction when the record id
    /// changes.
    pub fn push(&mut self, pair: &RawPublisherPair) -> Option<Transaction> {
        self.stats.pairs += 1;
        let place = clean_value(&pair.place, Role::Place);
        let name = clean_value(&pair.name, Role::Name);
        self.stats.values_rejected += place.is_err() as u64 + name.is_err() as u64;
        let finished = match &self.current {
            Some((id, _)) if *id != pair.record_id => self.finish_current(),
            _ => None,
        };
        if place.is_err() && name.is_err() {
            self.stats.pairs_rejected += 1;
            return finished;
        }
        let items: Vec<String> = [place, name].into_iter().flatten().map(|v| self.map(v)).collect();
        let (_, set) = self.current.get_or_insert_with(|| (pair.record_id.clone(), BTreeSet::new()));
        set.extend(items);
        finished
    }

    fn finish_current(&mut self) -> Option<Transaction> {
        let (id, items) = self.current.take()?;
        let t = Transaction::new(items, id)?;
        self.stats.transactions += 1;
        Some(t)
    }

    pub fn finish(mut self) -> (Option<Transaction>, CanonicalizeStats) {
        let last = self.finish_current();
        (last, self.stats)
    }
}

/// Batch form of [`Canonicalizer`].
pub fn canonicalize_pairs<'p>(
    pairs: impl IntoIterator<Item = &'p RawPublisherPair>,
    places: &ClusterTable,
    names: &ClusterTable,
    options: CanonicalizeOptions,
) -> (Vec<Transaction>, CanonicalizeStats) {
    let mut c = Canonicalizer::new(places, names, options);
    let mut out: Vec<Transaction> = pairs.into_iter().filter_map(|p| c.push(p)).collect();
    let (last, stats) = c.finish();
    out.extend(last);
    (out, stats)
}

/// Cluster tables for both roles built from the same pair corpus.
pub fn cluster_pairs<'p>(pairs: impl IntoIterator<Item = &'p RawPublisherPair>) -> (ClusterTable, ClusterTable) {
    let (places, names) = count_pair_values(pairs);
    (places.into_table(), names.into_table())
}

pub fn count_pair_values<'p>(pairs: impl IntoIterator<Item = &'p RawPublisherPair>) -> (ValueCounts, ValueCounts) {
    let mut places = ValueCounts::default();
    let mut names = ValueCounts::default();
    for pair in pairs {
        if let Ok(v) = clean_value(&pair.place, Role::Place) {
            places.add(&v, 1);
        }
        if let Ok(v) = clean_value(&pair.name, Role::Name) {
            names.add(&v, 1);
        }
    }
    (places, names)
}

#[derive(Serialize, Deserialize)]
struct TransactionLine<'a> {
    #[serde(borrow)]
    items: Vec<std::borrow::Cow<'a, str>>,
}

/// One `{"items":[...]}` object per line.
pub fn write_transaction<W: Write>(mut w: W, t: &Transaction) -> io::Result<()> {
    let line = TransactionLine { items: t.items.iter().map(|s| s.as_str().into()).collect() };
    serde_json::to_writer(&mut w, &line)?;
    w.write_all(b"\n")
}

/// Reads transaction JSON lines; record ids are the 1-based line numbers.
/// Lines whose item array is empty are skipped.
pub fn read_transactions<R: BufRead>(r: R) -> io::Result<Vec<Transaction>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TransactionLine =
            serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        if let Some(t) = Transaction::new(parsed.items.into_iter().map(|s| s.into_owned()), (i + 1).to_string()) {
            out.push(t);
        }
    }
    Ok(out)
}
