use pubsuggest_web::{cluster, fingerprint, parse_records, RuleModel};
use serde_json::Value;

const RECORDS: &str = "\
Chicago : University of Chicago Press,
Chicago : UNIVERSITY OF CHICAGO PRESS.
Chicago : Chicago Press University of
Chicago : Law Student Division American Bar Association ; | Chicago : University of Chicago Press,
London : Macmillan,
London : MacMillan,
London : Macmillan
[S.l.] : Macmillan
";

#[test]
fn records_split_into_pairs() {
    let pairs = parse_records("A : x | y\n\nB : z ");
    let flat: Vec<_> = pairs.iter().map(|p| (p.record_id.as_str(), p.place.as_str(), p.name.as_str())).collect();
    assert_eq!(flat, [("1", "A", "x"), ("1", "", "y"), ("3", "B", "z")]);
}

#[test]
fn variants_share_a_cluster() {
    let out: Value = serde_json::from_str(&cluster(RECORDS).unwrap()).unwrap();
    assert_eq!(out["pairs"], 9);
    let top = &out["names"][0];
    assert_eq!(top["canonical"], "University of Chicago Press");
    assert_eq!(top["variants"].as_array().unwrap().len(), 3);
    assert_eq!(fingerprint("Chicago Press, University of"), fingerprint("university of chicago press"));
}

#[test]
fn mining_and_prediction() {
    let model = RuleModel::new(RECORDS, 0.2, 0.6).unwrap();
    let summary: Value = serde_json::from_str(&model.summary()).unwrap();
    assert_eq!(summary["transactions"], 8);
    assert_eq!(summary["rules"].as_array().unwrap().len(), model.rule_count());
    assert!(model.rule_count() > 0);

    let out: Value = serde_json::from_str(&model.predict("LONDON", 5).unwrap()).unwrap();
    assert_eq!(out["items"][0], "London");
    assert_eq!(out["suggestions"][0]["value"], "Macmillan");
    assert_eq!(out["suggestions"][0]["confidence"], 1.0);

    let out: Value = serde_json::from_str(&model.predict(" | ", 5).unwrap()).unwrap();
    assert_eq!(out["suggestions"], serde_json::json!([]));
}

#[test]
fn bad_parameters_are_errors() {
    assert!(RuleModel::new(RECORDS, 0.0, 0.6).is_err());
    assert!(RuleModel::new(RECORDS, 0.2, 1.5).is_err());
    assert!(RuleModel::new("", 0.2, 0.6).is_err());
}
