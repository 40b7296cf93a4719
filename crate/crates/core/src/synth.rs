//! Seeded synthetic corpora with known ground truth: MARC records with
//! realistic place/publisher variants, and Zipf-distributed transactions for
//! load testing.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::marc::{Leader, MarcRecord, Subfield};
use crate::rules::{AssociationRule, RuleDatabase};

/// `n` transactions of 1-4 items drawn from a Zipf(s = 1) law over
/// `distinct` items named `i0..`. Duplicate draws collapse.
pub fn zipf_transactions(n: usize, distinct: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let zipf = Zipf::new(distinct as f64, 1.0).expect("valid zipf parameters");
    let names: Vec<String> = (0..distinct).map(|i| format!("i{i}")).collect();
    (0..n)
        .map(|_| {
            let k = rng.random_range(1..=4);
            let mut t: Vec<String> = (0..k).map(|_| names[zipf.sample(&mut rng) as usize - 1].clone()).collect();
            t.sort_unstable();
            t.dedup();
            t
        })
        .collect()
}

/// Random but valid rule database over a vocabulary of `vocabulary` items:
/// antecedents of 1-3 items, confidences in [0.6, 1], lifts in (1, 200].
pub fn random_rule_db(rules: usize, vocabulary: usize, seed: u64) -> RuleDatabase {
    let mut rng = StdRng::seed_from_u64(seed);
    let zipf = Zipf::new(vocabulary as f64, 0.8).expect("valid zipf parameters");
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(rules);
    while out.len() < rules {
        let k = rng.random_range(1..=3);
        let mut antecedent: Vec<String> = (0..k).map(|_| format!("v{}", zipf.sample(&mut rng) as usize - 1)).collect();
        antecedent.sort_unstable();
        antecedent.dedup();
        let consequent = format!("v{}", rng.random_range(0..vocabulary));
        if antecedent.contains(&consequent) || !seen.insert((antecedent.clone(), consequent.clone())) {
            continue;
        }
        // coarse grid so ties in confidence and lift actually occur
        let confidence = 0.6 + 0.4 * (rng.random_range(0..=40) as f64 / 40.0);
        let lift = 1.0 + rng.random_range(1..=199) as f64;
        let support = (confidence / lift) * rng.random_range(0.01..1.0);
        out.push(AssociationRule { antecedent, consequent, confidence, lift, support });
    }
    RuleDatabase::new(out).expect("generated rules are valid")
}

const PLACES: &[&str] = &[
    "New York",
    "London",
    "Paris",
    "Chicago",
    "Boston",
    "Washington, D.C.",
    "Moskva",
    "Berlin",
    "Tokyo",
    "México, D.F.",
    "Madrid",
    "Leipzig",
    "Oxford",
    "Cambridge, Mass.",
    "Philadelphia",
    "Roma",
    "Toronto",
    "São Paulo",
    "Kraków",
    "Zürich",
];

const PUBLISHERS: &[&str] = &[
    "American Library Association",
    "University of Chicago Press",
    "Macmillan",
    "St. Martin's Press",
    "Oxford University Press",
    "Harvard University Press",
    "Gallimard",
    "Éditions du Seuil",
    "Nauka",
    "Springer",
    "Penguin Books",
    "Knopf",
    "Fondo de Cultura Económica",
    "Alianza Editorial",
    "Suhrkamp",
    "Brockhaus",
    "Iwanami Shoten",
    "Routledge",
    "Government Printing Office",
    "Smithsonian Institution Press",
    "Doubleday",
    "Random House",
    "Harper & Row",
    "Little, Brown",
    "W.W. Norton",
    "Yale University Press",
    "Princeton University Press",
    "Cambridge University Press",
    "Flammarion",
    "Presses universitaires de France",
    "Progress Publishers",
    "Mondadori",
    "Einaudi",
    "Wydawnictwo Literackie",
    "Companhia das Letras",
    "Diogenes",
    "University of Toronto Press",
    "Hachette",
    "Faber and Faber",
    "Chatto & Windus",
];

/// Home place index for each publisher.
const HOMES: &[usize] =
    &[3, 3, 1, 0, 12, 13, 2, 2, 6, 7, 1, 0, 9, 10, 11, 11, 8, 1, 5, 5, 0, 0, 0, 4, 0, 0, 14, 1, 2, 2, 6, 15, 15, 18, 17, 19, 16, 2, 1, 1];

/// Ground truth recorded while generating a synthetic MARC corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureTruth {
    pub records: u64,
    pub records_without_260: u64,
    pub latin1_records: u64,
    /// Number of `$b` subfields in field 260 across the corpus.
    pub pairs: u64,
    /// Pairs whose place and name are both bracketed.
    pub pairs_rejected: u64,
    /// Records left with at least one usable value.
    pub transactions: u64,
    /// Distinct place / publisher entities among usable values; each is one
    /// fingerprint cluster.
    pub place_clusters: u64,
    pub name_clusters: u64,
}

pub struct SyntheticCorpus {
    pub records: Vec<MarcRecord>,
    pub truth: FixtureTruth,
}

impl SyntheticCorpus {
    pub fn to_iso2709(&self) -> Vec<u8> {
        self.records.iter().flat_map(|r| r.to_iso2709().expect("synthetic records encode")).collect()
    }
}

/// Spelling variants that keep the fingerprint key: case, spacing, ISBD
/// punctuation, inserted periods, dropped accents.
fn variant(rng: &mut StdRng, canonical: &str, trailing: &str) -> String {
    let mut s = canonical.to_string();
    match rng.random_range(0..10) {
        0 => s = s.to_uppercase(),
        1 => s = s.replacen(' ', "  ", 1),
        2 => s = s.replace(". ", " ").replace('.', ""),
        3 => s = s.chars().map(fold_accent).collect(),
        4 => s = s.to_lowercase(),
        _ => {}
    }
    format!("{s}{trailing}")
}

fn fold_accent(c: char) -> char {
    match c {
        'é' | 'è' => 'e',
        'É' => 'E',
        'á' => 'a',
        'ã' => 'a',
        'ó' | 'ô' => 'o',
        'ü' => 'u',
        _ => c,
    }
}

/// Deterministic synthetic corpus of `n` records.
///
/// Mix: ~8% without field 260, ~5% with a fully bracketed 260, ~5% with a
/// bracketed place only, ~12% with two place/publisher statements, ~10%
/// Latin-1 encoded; the rest one statement. Publishers follow a Zipf law and
/// appear with their home place 85% of the time.
pub fn synthetic_marc_corpus(n: usize, seed: u64) -> SyntheticCorpus {
    let mut rng = StdRng::seed_from_u64(seed);
    let zipf = Zipf::new(PUBLISHERS.len() as f64, 1.1).expect("valid zipf parameters");
    let mut truth = FixtureTruth::default();
    let mut places_seen = std::collections::BTreeSet::new();
    let mut names_seen = std::collections::BTreeSet::new();
    let mut records = Vec::with_capacity(n);

    for i in 0..n {
        let latin1 = rng.random_bool(0.10);
        let leader = if latin1 { "00000nam  2200000 i 4500" } else { "00000nam a2200000 i 4500" };
        let mut r = MarcRecord::new(Leader::new(leader).expect("static leader"));
        r.push_control("001", format!("syn{i:06}")).expect("control field");
        r.push_data("245", ['1', '0'], vec![Subfield::new('a', format!("Synthetic title {i} /"))]).expect("title");
        truth.records += 1;
        if latin1 {
            truth.latin1_records += 1;
        }

        let roll = rng.random_range(0..100);
        if roll < 8 {
            truth.records_without_260 += 1;
            records.push(r);
            continue;
        }
        let mut subfields = Vec::new();
        let mut usable = false;
        if roll < 13 {
            subfields.push(Subfield::new('a', "[S.l.] :"));
            subfields.push(Subfield::new('b', "[s.n.],"));
            truth.pairs_rejected += 1;
        } else {
            let statements = if roll >= 88 { 2 } else { 1 };
            for s in 0..statements {
                let publisher = zipf.sample(&mut rng) as usize - 1;
                let place = if rng.random_bool(0.85) { HOMES[publisher] } else { rng.random_range(0..PLACES.len()) };
                let bracket_place = (13..18).contains(&roll) && s == 0;
                if bracket_place {
                    subfields.push(Subfield::new('a', format!("[{}] :", PLACES[place])));
                } else {
                    subfields.push(Subfield::new('a', variant(&mut rng, PLACES[place], " :")));
                    places_seen.insert(place);
                }
                let last = s + 1 == statements;
                subfields.push(Subfield::new('b', variant(&mut rng, PUBLISHERS[publisher], if last { "," } else { " ;" })));
                names_seen.insert(publisher);
                usable = true;
            }
        }
        truth.pairs += subfields.iter().filter(|sf| sf.code == 'b').count() as u64;
        subfields.push(Subfield::new('c', format!("{}.", 1900 + rng.random_range(0..120))));
        r.push_data("260", [' ', ' '], subfields).expect("260");
        if usable {
            truth.transactions += 1;
        }
        records.push(r);
    }
    truth.place_clusters = places_seen.len() as u64;
    truth.name_clusters = names_seen.len() as u64;
    SyntheticCorpus { records, truth }
}
