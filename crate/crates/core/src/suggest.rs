//! Posting-list index over a rule database for autosuggest queries.

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::normalize::{clean_value, ClusterTable, Role};
use crate::rules::{rank_predictions, AssociationRule, Prediction, RuleDatabase};

/// Immutable index: antecedent item → ids of the rules mentioning it.
#[derive(Debug, Clone)]
pub struct RuleIndex {
    rules: Vec<AssociationRule>,
    postings: FxHashMap<String, Vec<u32>>,
    consequents: Vec<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexStats {
    pub rules: usize,
    pub consequents: usize,
    pub top_consequents: Vec<(String, u64)>,
}

impl RuleIndex {
    pub fn new(db: RuleDatabase) -> Self {
        let rules = db.into_rules();
        let mut postings: FxHashMap<String, Vec<u32>> = FxHashMap::default();
        let mut consequent_counts: FxHashMap<&str, u64> = FxHashMap::default();
        for (id, rule) in rules.iter().enumerate() {
            for item in &rule.antecedent {
                postings.entry(item.clone()).or_default().push(id as u32);
            }
            *consequent_counts.entry(&rule.consequent).or_insert(0) += 1;
        }
        let mut consequents: Vec<(String, u64)> = consequent_counts.into_iter().map(|(s, c)| (s.to_string(), c)).collect();
        consequents.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        RuleIndex { rules, postings, consequents }
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn consequent_count(&self) -> usize {
        self.consequents.len()
    }

    /// Rule and consequent counts plus the `top` most frequent consequents
    /// (ties by ascending value).
    pub fn stats(&self, top: usize) -> IndexStats {
        IndexStats {
            rules: self.rules.len(),
            consequents: self.consequents.len(),
            top_consequents: self.consequents.iter().take(top).cloned().collect(),
        }
    }

    /// Rules whose antecedent lies inside `query` and whose consequent does
    /// not. Walks the posting lists of the query items, counting hits per
    /// rule; a rule matches once every antecedent item has been hit.
    pub fn matching<'a, S: AsRef<str>>(&'a self, query: &[S]) -> Vec<&'a AssociationRule> {
        let items: FxHashSet<&str> = query.iter().map(AsRef::as_ref).collect();
        let mut lists: Vec<&Vec<u32>> = items.iter().filter_map(|i| self.postings.get(*i)).collect();
        lists.sort_by_key(|l| l.len());
        let mut hits: FxHashMap<u32, usize> = FxHashMap::default();
        for list in lists {
            for &id in list {
                *hits.entry(id).or_insert(0) += 1;
            }
        }
        let mut ids: Vec<u32> = hits
            .into_iter()
            .filter(|&(id, n)| {
                let r = &self.rules[id as usize];
                n == r.antecedent.len() && !items.contains(r.consequent.as_str())
            })
            .map(|(id, _)| id)
            .collect();
        ids.sort_unstable();
        ids.into_iter().map(|id| &self.rules[id as usize]).collect()
    }

    pub fn suggest<S: AsRef<str>>(&self, query: &[S], limit: usize) -> Vec<Prediction> {
        let mut out = rank_predictions(self.matching(query));
        out.truncate(limit);
        out
    }
}

/// Maps user-typed query values onto cluster canonicals: clean, then look up
/// the fingerprint in each table in turn. Without tables values pass through
/// unchanged.
#[derive(Debug, Clone, Default)]
pub struct QueryNormalizer {
    tables: Vec<ClusterTable>,
}

impl QueryNormalizer {
    pub fn new(tables: Vec<ClusterTable>) -> Self {
        QueryNormalizer { tables }
    }

    pub fn has_tables(&self) -> bool {
        !self.tables.is_empty()
    }

    /// `None` when cleaning rejects the value.
    pub fn normalize(&self, raw: &str) -> Option<String> {
        if self.tables.is_empty() {
            return Some(raw.to_string());
        }
        let clean = clean_value(raw, Role::Name).ok()?;
        let canonical = self.tables.iter().find_map(|t| t.canonical_for(clean.text()));
        Some(canonical.map(str::to_string).unwrap_or_else(|| clean.into_text()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub value: String,
    pub confidence: f64,
    pub lift: f64,
}

impl From<Prediction> for Suggestion {
    fn from(p: Prediction) -> Self {
        Suggestion { value: p.item, confidence: p.confidence, lift: p.lift }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub items: Vec<String>,
    pub suggestions: Vec<Suggestion>,
    pub elapsed_ms: f64,
}
