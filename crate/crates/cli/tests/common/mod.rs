#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pubsuggest_core::fpm::{mine, MiningParams};
use pubsuggest_core::rules::{generate_rules, RuleDatabase};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pubsuggest"))
}

pub fn run_bin(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn pubsuggest")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn four_transactions() -> Vec<Vec<&'static str>> {
    vec![vec!["a", "b"], vec!["b", "c"], vec!["a", "b", "c"], vec!["a", "b"]]
}

/// a→b, b→a, c→b: the rules of the four-transaction corpus at 0.5 / 0.6.
pub fn three_rule_db() -> RuleDatabase {
    let params = MiningParams::new(0.5, 0.6).unwrap();
    let t = four_transactions();
    generate_rules(&mine(&t, &params).unwrap(), &params, t.len() as u64).unwrap()
}
