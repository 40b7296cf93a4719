//! WebAssembly bindings for the demo page in `www/`.
//!
//! Records are typed one per line. A line holds one or more
//! `place : publisher` pairs separated by `|`; a pair without ` : ` is a
//! publisher with no place.

use pubsuggest_core::fpm::{mine, MiningParams};
use pubsuggest_core::normalize::{canonicalize_pairs, cluster_pairs, CanonicalizeOptions, ClusterTable};
use pubsuggest_core::suggest::{QueryNormalizer, Suggestion};
use pubsuggest_core::{generate_rules, AssociationRule, RawPublisherPair, RuleIndex};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub fn parse_records(text: &str) -> Vec<RawPublisherPair> {
    let mut pairs = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        for pair in line.split('|').map(str::trim).filter(|p| !p.is_empty()) {
            let (place, name) = pair.split_once(" : ").unwrap_or(("", pair));
            pairs.push(RawPublisherPair {
                record_id: (line_no + 1).to_string(),
                place: place.trim().to_string(),
                name: name.trim().to_string(),
            });
        }
    }
    pairs
}

#[derive(Serialize)]
struct ClusterView<'a> {
    key: &'a str,
    canonical: &'a str,
    variants: &'a [(String, u64)],
}

fn cluster_views(table: &ClusterTable) -> Vec<ClusterView<'_>> {
    let mut views: Vec<_> =
        table.iter().map(|(key, c)| ClusterView { key: key.as_str(), canonical: &c.canonical, variants: &c.variants }).collect();
    views.sort_by(|a, b| b.variants.len().cmp(&a.variants.len()).then_with(|| a.canonical.cmp(b.canonical)));
    views
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Fingerprint clusters for places and publishers, largest clusters first.
#[wasm_bindgen]
pub fn cluster(records: &str) -> Result<String, String> {
    let pairs = parse_records(records);
    let (places, names) = cluster_pairs(&pairs);
    to_json(&serde_json::json!({
        "pairs": pairs.len(),
        "places": cluster_views(&places),
        "names": cluster_views(&names),
    }))
}

#[wasm_bindgen]
pub fn fingerprint(value: &str) -> String {
    pubsuggest_core::fingerprint(value).as_str().to_string()
}

#[derive(Serialize)]
struct MiningSummary<'a> {
    transactions: usize,
    itemsets: usize,
    rules: &'a [AssociationRule],
}

/// Rules mined from typed records, kept around for predictions.
#[wasm_bindgen]
pub struct RuleModel {
    index: RuleIndex,
    normalizer: QueryNormalizer,
    summary: String,
}

#[wasm_bindgen]
impl RuleModel {
    #[wasm_bindgen(constructor)]
    pub fn new(records: &str, min_support: f64, min_confidence: f64) -> Result<RuleModel, String> {
        let params = MiningParams::new(min_support, min_confidence).map_err(|e| e.to_string())?;
        let pairs = parse_records(records);
        let (places, names) = cluster_pairs(&pairs);
        let (transactions, _) = canonicalize_pairs(&pairs, &places, &names, CanonicalizeOptions::default());
        if transactions.is_empty() {
            return Err("no usable records".to_string());
        }
        let itemsets = mine(&transactions, &params).map_err(|e| e.to_string())?;
        let db = generate_rules(&itemsets, &params, transactions.len() as u64).map_err(|e| e.to_string())?;
        let summary = to_json(&MiningSummary { transactions: transactions.len(), itemsets: itemsets.len(), rules: db.rules() })?;
        Ok(RuleModel { index: RuleIndex::new(db), normalizer: QueryNormalizer::new(vec![places, names]), summary })
    }

    /// `{"transactions", "itemsets", "rules"}` as JSON.
    pub fn summary(&self) -> String {
        self.summary.clone()
    }

    pub fn rule_count(&self) -> usize {
        self.index.rule_count()
    }

    /// Ranked suggestions for `|`-separated query values.
    pub fn predict(&self, query: &str, limit: usize) -> Result<String, String> {
        let items: Vec<String> =
            query.split('|').map(str::trim).filter(|s| !s.is_empty()).filter_map(|v| self.normalizer.normalize(v)).collect();
        let suggestions: Vec<Suggestion> = self.index.suggest(&items, limit).into_iter().map(Into::into).collect();
        to_json(&serde_json::json!({ "items": items, "suggestions": suggestions }))
    }
}
