mod common;

use std::fs;

use common::{fixture, three_rule_db};
use pubsuggest_cli::pipeline::{self, *};
use pubsuggest_cli::{PipelineManifest, RunConfig, StageOptions, Suggester};
use pubsuggest_core::fpm::{read_itemsets, MiningParams};
use pubsuggest_core::marc::{parse_iso2709, Leader, MarcRecord, Subfield};
use pubsuggest_core::rules::RuleDatabase;
use pubsuggest_core::synth::FixtureTruth;

fn opts(workers: usize) -> StageOptions {
    StageOptions { workers, resume: false }
}

fn truth() -> FixtureTruth {
    serde_json::from_slice(&fs::read(fixture("synthetic_1000.truth.json")).unwrap()).unwrap()
}

#[test]
fn synthetic_fixture_counters_match_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let truth = truth();
    let m = pipeline::extract(&[fixture("synthetic_1000.mrc")], dir.path(), false, opts(4)).unwrap();
    assert_eq!(m.counters.records_read, Some(truth.records));
    assert_eq!(m.counters.records_skipped, Some(0));
    assert_eq!(m.counters.encoding_fallbacks, Some(truth.latin1_records));
    assert_eq!(m.counters.pairs_extracted, Some(truth.pairs));

    let m = pipeline::cluster(&dir.path().join(PAIRS_FILE), dir.path(), false, opts(4)).unwrap();
    assert_eq!(m.counters.pairs_rejected, Some(truth.pairs_rejected));
    assert_eq!(m.counters.transactions, Some(truth.transactions));
    assert_eq!(m.counters.place_clusters, Some(truth.place_clusters));
    assert_eq!(m.counters.name_clusters, Some(truth.name_clusters));
    assert_eq!(m.counters.records_read, Some(truth.records), "upstream counters survive a linked stage");
    assert_eq!(m.stages.keys().collect::<Vec<_>>(), ["cluster", "extract"]);

    let m = pipeline::mine(&dir.path().join(TRANSACTIONS_FILE), dir.path(), MiningParams::new(0.01, 0.6).unwrap(), opts(4)).unwrap();
    m.counters.check_monotone().unwrap();
    assert!(m.counters.rules.unwrap() > 0);
    assert_eq!(m.stages.len(), 3);
    assert_eq!(PipelineManifest::load_or_default(dir.path()).unwrap(), m);
}

#[test]
fn corrupt_records_are_counted_not_fatal() {
    let (records, _) = parse_iso2709(&fs::read(fixture("synthetic_1000.mrc")).unwrap()[..]).unwrap();
    let mut bytes = Vec::new();
    let mut corrupt = 0;
    for (i, r) in records.iter().take(200).enumerate() {
        let mut raw = r.to_iso2709().unwrap();
        if i % 10 == 3 {
            raw[12..17].copy_from_slice(b"xxxxx");
            corrupt += 1;
        }
        bytes.extend(raw);
    }
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("corrupt.mrc");
    fs::write(&input, bytes).unwrap();
    let m = pipeline::extract(&[input], &dir.path().join("out"), false, opts(2)).unwrap();
    assert_eq!(m.counters.records_skipped, Some(corrupt));
    assert_eq!(m.counters.records_read, Some(200 - corrupt));
}

#[test]
fn empty_input_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("in")).unwrap();
    let err = pipeline::extract(&[dir.path().join("in")], &dir.path().join("out"), false, opts(1)).unwrap_err();
    assert_eq!(err.to_string(), "no input records");
}

#[test]
fn directories_mix_formats_and_number_records_without_001() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir_all(input.join("nested")).unwrap();
    fs::copy(fixture("provision_records.jsonl"), input.join("a.jsonl")).unwrap();
    let mut r = MarcRecord::new(Leader::default());
    r.push_data("260", [' ', ' '], vec![Subfield::new('a', "Paris :"), Subfield::new('b', "Gallimard,")]).unwrap();
    pipeline::write_marc_file(&input.join("nested/b.mrc"), &[r.clone(), r]).unwrap();
    fs::write(input.join(".hidden.mrc"), b"garbage").unwrap();

    let out = dir.path().join("out");
    let m = pipeline::extract(&[input], &out, false, opts(2)).unwrap();
    assert_eq!(m.counters.records_read, Some(12));
    assert_eq!(m.stages["extract"].inputs.len(), 2);
    let pairs = fs::read_to_string(out.join(PAIRS_FILE)).unwrap();
    let tail: Vec<&str> = pairs.lines().rev().take(2).collect();
    assert_eq!(tail, ["1-2,Paris :,\"Gallimard,\"", "1-1,Paris :,\"Gallimard,\""]);
}

#[test]
fn bracketed_only_corpus_yields_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = MarcRecord::new(Leader::default());
    r.push_control("001", "x1").unwrap();
    r.push_data("260", [' ', ' '], vec![Subfield::new('a', "[S.l.] :"), Subfield::new('b', "[s.n.],")]).unwrap();
    let input = dir.path().join("in.mrc");
    pipeline::write_marc_file(&input, &[r]).unwrap();
    let m = pipeline::run(&[input], dir.path(), RunConfig::default(), opts(1)).unwrap();
    assert_eq!(m.counters.transactions, Some(0));
    assert_eq!(m.counters.pairs_rejected, Some(1));
    assert_eq!(m.counters.rules, Some(0));
    assert_eq!(fs::read_to_string(dir.path().join(TRANSACTIONS_FILE)).unwrap(), "");
    assert_eq!(fs::read_to_string(dir.path().join(RULES_CSV_FILE)).unwrap(), "antecedent,consequent,confidence,lift,support\n");
}

#[test]
fn rerunning_cluster_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    pipeline::extract(&[fixture("synthetic_1000.mrc")], dir.path(), false, opts(3)).unwrap();
    let pairs = dir.path().join(PAIRS_FILE);
    pipeline::cluster(&pairs, dir.path(), false, opts(3)).unwrap();
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    let first = [read(PLACE_CLUSTERS_FILE), read(NAME_CLUSTERS_FILE), read(TRANSACTIONS_FILE)];
    pipeline::cluster(&pairs, dir.path(), false, opts(1)).unwrap();
    assert_eq!([read(PLACE_CLUSTERS_FILE), read(NAME_CLUSTERS_FILE), read(TRANSACTIONS_FILE)], first);
}

#[test]
fn four_transaction_corpus_mines_the_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let m = pipeline::mine(&fixture("four_transactions.jsonl"), dir.path(), MiningParams::new(0.5, 0.6).unwrap(), opts(2)).unwrap();
    let sets = read_itemsets(fs::File::open(dir.path().join(ITEMSETS_FILE)).map(std::io::BufReader::new).unwrap()).unwrap();
    let flat: Vec<(String, u64)> = sets.iter().map(|s| (s.items.join(","), s.count)).collect();
    let expected = [("b", 4), ("a", 3), ("a,b", 3), ("b,c", 2), ("c", 2)];
    assert_eq!(flat, expected.map(|(s, c)| (s.to_string(), c)));
    let rules = RuleDatabase::read_csv(fs::File::open(dir.path().join(RULES_CSV_FILE)).unwrap()).unwrap();
    assert_eq!(rules.rules(), three_rule_db().rules());
    assert_eq!(m.counters.rule_candidates, Some(4));
    assert_eq!(m.counters.rules, Some(3));
    // distinct transactions {a,b}, {b,c}, {a,b,c}: only {b,c} has a prediction left (a via b→a)
    assert_eq!(m.counters.predictions, Some(1));
    let predictions = fs::read_to_string(dir.path().join(PREDICTIONS_FILE)).unwrap();
    assert_eq!(predictions, "{\"items\":[\"b\",\"c\"],\"prediction\":[{\"item\":\"a\",\"confidence\":0.75,\"lift\":1.0}]}\n");
}

#[test]
fn unsatisfiable_support_writes_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.jsonl");
    fs::write(&input, "{\"items\":[\"a\"]}\n{\"items\":[\"b\"]}\n").unwrap();
    let m = pipeline::mine(&input, dir.path(), MiningParams::new(1.0, 0.6).unwrap(), opts(1)).unwrap();
    assert_eq!((m.counters.itemsets, m.counters.rules), (Some(0), Some(0)));
    assert_eq!(fs::read_to_string(dir.path().join(ITEMSETS_FILE)).unwrap(), "");
}

#[test]
fn resume_skips_intact_stages_and_redoes_damaged_ones() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig { params: MiningParams::new(0.02, 0.5).unwrap(), ..Default::default() };
    let resume = StageOptions { workers: 2, resume: true };
    let first = pipeline::run(&[fixture("synthetic_1000.mrc")], dir.path(), config, resume).unwrap();
    let rules = fs::read(dir.path().join(RULES_CSV_FILE)).unwrap();
    let pairs_modified = fs::metadata(dir.path().join(PAIRS_FILE)).unwrap().modified().unwrap();

    fs::write(dir.path().join(RULES_CSV_FILE), "tampered").unwrap();
    let second = pipeline::run(&[fixture("synthetic_1000.mrc")], dir.path(), config, resume).unwrap();
    assert_eq!(second, first);
    assert_eq!(fs::read(dir.path().join(RULES_CSV_FILE)).unwrap(), rules);
    assert_eq!(fs::metadata(dir.path().join(PAIRS_FILE)).unwrap().modified().unwrap(), pairs_modified);

    // a parameter change invalidates only the mine stage
    let lower = RunConfig { params: MiningParams::new(0.01, 0.5).unwrap(), ..config };
    let third = pipeline::run(&[fixture("synthetic_1000.mrc")], dir.path(), lower, resume).unwrap();
    assert_eq!(third.stages["cluster"], first.stages["cluster"]);
    assert_ne!(third.stages["mine"], first.stages["mine"]);
}

#[test]
fn mining_a_foreign_transaction_file_drops_stale_upstream_counters() {
    let dir = tempfile::tempdir().unwrap();
    pipeline::run(&[fixture("synthetic_1000.mrc")], dir.path(), RunConfig::default(), opts(2)).unwrap();
    let m = pipeline::mine(&fixture("four_transactions.jsonl"), dir.path(), MiningParams::new(0.5, 0.6).unwrap(), opts(2)).unwrap();
    assert_eq!(m.stages.keys().collect::<Vec<_>>(), ["mine"]);
    assert_eq!(m.counters.pairs_extracted, None);
    assert_eq!(m.counters.transactions, Some(4));
}

#[test]
fn provision_records_reproduce_the_prediction_row() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig { params: MiningParams::new(0.1, 0.6).unwrap(), ..Default::default() };
    let m = pipeline::run(&[fixture("provision_records.jsonl")], dir.path(), config, opts(2)).unwrap();
    assert_eq!(m.counters.transactions, Some(10));
    assert_eq!(m.counters.name_clusters, Some(3));

    let mined = RuleDatabase::read_csv(fs::File::open(dir.path().join(RULES_CSV_FILE)).unwrap()).unwrap();
    let reference = RuleDatabase::read_csv(fs::File::open(fixture("reference_rules.csv")).unwrap()).unwrap();
    let row = &reference.rules()[1];
    assert!(mined.rules().contains(row), "{row:?} not in {:?}", mined.rules());

    let suggester =
        Suggester::load(&dir.path().join(RULES_CSV_FILE), &[dir.path().join(PLACE_CLUSTERS_FILE), dir.path().join(NAME_CLUSTERS_FILE)])
            .unwrap();
    let response = suggester.query(&["Chicago :", "law student division american bar association"], 5);
    assert_eq!(response.items, ["Chicago", "Law Student Division American Bar Association"]);
    assert_eq!(response.suggestions[0].value, "University of Chicago Press");
    assert_eq!((response.suggestions[0].confidence, response.suggestions[0].lift), (1.0, 2.0));
}
