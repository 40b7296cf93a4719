//! Publisher place/name association mining for bibliographic records.
//!
//! The crate is organised as a batch pipeline:
//!
//! * [`marc`] reads ISO 2709 (and MARC-in-JSON) records and pulls raw
//!   place/publisher pairs out of field 260.
//! * [`normalize`] cleans those values and clusters spelling variants by
//!   fingerprint key collision, emitting one [`normalize::Transaction`] per
//!   record.
//! * [`fpm`] mines frequent itemsets with FP-growth.
//! * [`rules`] turns itemsets into single-consequent association rules and
//!   ranked predictions.
//! * [`suggest`] indexes a rule database for fast autosuggest queries.

pub mod fpm;
pub mod marc;
pub mod normalize;
pub mod rules;
pub mod suggest;
#[cfg(feature = "synth")]
pub mod synth;

pub use fpm::{mine, FrequentItemset, MiningParams};
pub use marc::{MarcRecord, RawPublisherPair};
pub use normalize::{fingerprint, ClusterTable, Transaction};
pub use rules::{generate_rules, predict, AssociationRule, Prediction, PredictionEntry, RuleDatabase};
pub use suggest::RuleIndex;
