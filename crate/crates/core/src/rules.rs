//! Single-consequent association rules and ranked predictions.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fpm::{FrequentItemset, MiningParams};
use crate::suggest::RuleIndex;

/// Joins antecedent items in the CSV form; items may contain commas.
pub const ITEM_SEPARATOR: char = '\u{1F}';

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("itemset {0:?} missing from mining result (incomplete or not downward closed)")]
    MissingSubset(Vec<String>),
    #[error("line {line}: {reason}")]
    Invalid { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRule {
    /// Ascending, non-empty.
    pub antecedent: Vec<String>,
    pub consequent: String,
    pub confidence: f64,
    pub lift: f64,
    pub support: f64,
}

impl AssociationRule {
    /// Support of the consequent alone, recovered as confidence / lift.
    pub fn consequent_support(&self) -> f64 {
        self.confidence / self.lift
    }

    /// Structural and metric invariants that hold for any stored rule.
    pub fn check(&self) -> Result<(), String> {
        if self.antecedent.is_empty() {
            return Err("empty antecedent".into());
        }
        if self.consequent.is_empty() {
            return Err("empty consequent".into());
        }
        if self.antecedent.windows(2).any(|w| w[0] >= w[1]) {
            return Err("antecedent items not sorted and unique".into());
        }
        if self.antecedent.contains(&self.consequent) {
            return Err(format!("consequent {:?} is also in the antecedent", self.consequent));
        }
        if self.antecedent.iter().chain([&self.consequent]).any(|s| s.contains(ITEM_SEPARATOR)) {
            return Err("item contains the unit separator".into());
        }
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(format!("confidence {} outside (0, 1]", self.confidence));
        }
        if !(self.lift > 0.0 && self.lift.is_finite()) {
            return Err(format!("lift {} is not positive", self.lift));
        }
        if !(self.support > 0.0 && self.support <= 1.0) {
            return Err(format!("support {} outside (0, 1]", self.support));
        }
        let cs = self.consequent_support();
        if !(cs > 0.0 && cs <= 1.0 + 1e-12) {
            return Err(format!("implied consequent support {cs} outside (0, 1]"));
        }
        if self.support > self.consequent_support() * (1.0 + 1e-9) {
            return Err("rule support exceeds consequent support".into());
        }
        Ok(())
    }

    /// Threshold check against mining parameters.
    pub fn meets(&self, params: &MiningParams) -> bool {
        self.confidence >= params.min_confidence && self.support >= params.min_support
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        self.antecedent.cmp(&other.antecedent).then_with(|| self.consequent.cmp(&other.consequent))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleMeta {
    pub corpus_size: u64,
    pub params: MiningParams,
}

/// Rules sorted by (antecedent, consequent) with no duplicate pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleDatabase {
    rules: Vec<AssociationRule>,
    /// Present when the database came from mining; files carry rules only.
    pub meta: Option<RuleMeta>,
}

impl RuleDatabase {
    /// Sorts the rules; fails on a duplicate (antecedent, consequent) pair or
    /// a rule violating [`AssociationRule::check`]. `line` in the error is the
    /// 1-based rule position.
    pub fn new(mut rules: Vec<AssociationRule>) -> Result<Self, RulesError> {
        for (i, r) in rules.iter().enumerate() {
            r.check().map_err(|reason| RulesError::Invalid { line: i as u64 + 1, reason })?;
        }
        rules.sort_by(AssociationRule::key_cmp);
        if let Some(w) = rules.windows(2).find(|w| w[0].key_cmp(&w[1]) == Ordering::Equal) {
            return Err(RulesError::Invalid { line: 0, reason: format!("duplicate rule {:?} -> {:?}", w[0].antecedent, w[0].consequent) });
        }
        Ok(RuleDatabase { rules, meta: None })
    }

    pub fn rules(&self) -> &[AssociationRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn into_rules(self) -> Vec<AssociationRule> {
        self.rules
    }

    /// `antecedent,consequent,confidence,lift,support`; floats use the
    /// shortest representation that reads back exactly.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["antecedent", "consequent", "confidence", "lift", "support"])?;
        let sep = ITEM_SEPARATOR.to_string();
        for r in &self.rules {
            out.write_record([
                r.antecedent.join(&sep),
                r.consequent.clone(),
                r.confidence.to_string(),
                r.lift.to_string(),
                r.support.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, RulesError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = reader.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["antecedent", "consequent", "confidence", "lift", "support"] {
            return Err(RulesError::Invalid { line: 1, reason: format!("unexpected header {:?}", header) });
        }
        let mut rules = Vec::new();
        let mut lines = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let invalid = |reason: String| RulesError::Invalid { line, reason };
            if rec.len() != 5 {
                return Err(invalid(format!("expected 5 columns, found {}", rec.len())));
            }
            let num = |i: usize, name: &str| -> Result<f64, RulesError> {
                rec[i].trim().parse::<f64>().map_err(|e| invalid(format!("{name} {:?}: {e}", &rec[i])))
            };
            let antecedent: Vec<String> =
                if rec[0].is_empty() { Vec::new() } else { rec[0].split(ITEM_SEPARATOR).map(str::to_string).collect() };
            let rule = AssociationRule {
                antecedent,
                consequent: rec[1].to_string(),
                confidence: num(2, "confidence")?,
                lift: num(3, "lift")?,
                support: num(4, "support")?,
            };
            rule.check().map_err(invalid)?;
            rules.push(rule);
            lines.push(line);
        }
        Self::new(rules).map_err(|e| match e {
            RulesError::Invalid { line, reason } if line > 0 => RulesError::Invalid { line: lines[line as usize - 1], reason },
            other => other,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.rules {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, RulesError> {
        let mut rules = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i as u64 + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rule: AssociationRule =
                serde_json::from_str(&line).map_err(|e| RulesError::Invalid { line: lineno, reason: e.to_string() })?;
            rule.check().map_err(|reason| RulesError::Invalid { line: lineno, reason })?;
            rules.push(rule);
        }
        Self::new(rules)
    }
}

/// Every `(Z \ {z}) → z` over frequent itemsets `Z` with `|Z| ≥ 2` whose
/// confidence reaches `min_confidence`. Metrics come from the mined counts
/// only; `n` is the transaction count the itemsets were mined from.
pub fn generate_rules(itemsets: &[FrequentItemset], params: &MiningParams, n: u64) -> Result<RuleDatabase, RulesError> {
    let counts: HashMap<&[String], u64> = itemsets.iter().map(|s| (s.items.as_slice(), s.count)).collect();
    let lookup = |items: &[String]| counts.get(items).copied().ok_or_else(|| RulesError::MissingSubset(items.to_vec()));
    let nf = n as f64;
    let mut rules = Vec::new();
    let mut antecedent = Vec::new();
    for set in itemsets.iter().filter(|s| s.items.len() >= 2) {
        for (i, consequent) in set.items.iter().enumerate() {
            antecedent.clear();
            antecedent.extend(set.items.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| s.clone()));
            let antecedent_count = lookup(&antecedent)?;
            let consequent_count = lookup(std::slice::from_ref(consequent))?;
            let confidence = set.count as f64 / antecedent_count as f64;
            if confidence < params.min_confidence {
                continue;
            }
            rules.push(AssociationRule {
                antecedent: antecedent.clone(),
                consequent: consequent.clone(),
                confidence,
                lift: confidence / (consequent_count as f64 / nf),
                support: set.count as f64 / nf,
            });
        }
    }
    let mut db = RuleDatabase::new(rules)?;
    db.meta = Some(RuleMeta { corpus_size: n, params: *params });
    Ok(db)
}

/// Number of `(itemset, consequent)` candidates rule generation considers:
/// the upper bound on the rule count.
pub fn rule_candidates(itemsets: &[FrequentItemset]) -> u64 {
    itemsets.iter().filter(|s| s.items.len() >= 2).map(|s| s.items.len() as u64).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub item: String,
    pub confidence: f64,
    pub lift: f64,
}

/// Confidence descending, then lift descending, then item ascending.
pub fn prediction_order(a: &Prediction, b: &Prediction) -> Ordering {
    b.confidence.total_cmp(&a.confidence).then_with(|| b.lift.total_cmp(&a.lift)).then_with(|| a.item.cmp(&b.item))
}

/// Dedupes matched rules by consequent (keeping the best-ranked source
/// rule) and orders the result. Callers pass only rules whose antecedent is
/// inside the query and whose consequent is not.
pub fn rank_predictions<'a>(matched: impl IntoIterator<Item = &'a AssociationRule>) -> Vec<Prediction> {
    let mut best: HashMap<&str, Prediction> = HashMap::new();
    for r in matched {
        let candidate = Prediction { item: r.consequent.clone(), confidence: r.confidence, lift: r.lift };
        match best.get_mut(r.consequent.as_str()) {
            Some(existing) if prediction_order(&candidate, existing) == Ordering::Less => *existing = candidate,
            Some(_) => {}
            None => {
                best.insert(&r.consequent, candidate);
            }
        }
    }
    let mut out: Vec<Prediction> = best.into_values().collect();
    out.sort_by(prediction_order);
    out
}

/// Linear-scan prediction: consequents of every rule whose antecedent is a
/// subset of `items`, excluding items already present.
pub fn predict<S: AsRef<str>>(items: &[S], db: &RuleDatabase, limit: usize) -> Vec<Prediction> {
    let query: BTreeSet<&str> = items.iter().map(AsRef::as_ref).collect();
    let matched =
        db.rules.iter().filter(|r| !query.contains(r.consequent.as_str()) && r.antecedent.iter().all(|a| query.contains(a.as_str())));
    let mut out = rank_predictions(matched);
    out.truncate(limit);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub items: Vec<String>,
    pub prediction: Vec<Prediction>,
}

/// One entry per query with a non-empty prediction list, in query order.
pub fn build_prediction_db(db: &RuleDatabase, queries: Vec<Vec<String>>) -> Vec<PredictionEntry> {
    let index = RuleIndex::new(db.clone());
    let run = |items: Vec<String>| {
        let prediction = index.suggest(&items, usize::MAX);
        (!prediction.is_empty()).then_some(PredictionEntry { items, prediction })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        queries.into_par_iter().filter_map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        queries.into_iter().filter_map(run).collect()
    }
}

pub fn write_predictions<W: Write>(mut w: W, entries: &[PredictionEntry]) -> io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
