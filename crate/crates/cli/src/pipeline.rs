//! File-to-file pipeline stages: extract, cluster, mine.
//!
//! Every stage reads its input from disk, writes its outputs into an output
//! directory and updates `manifest.json` there, so stages can be re-run or
//! swapped independently.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::{info, warn};
use pubsuggest_core::fpm::{mine_with_workers, write_itemsets, FpmError, FrequentItemset, MiningParams};
use pubsuggest_core::marc::{
    extract_publisher_pairs, ExtractOptions, Iso2709Reader, JsonRecordReader, MarcRecord, PairWriter, ParseStats, RawPublisherPair,
};
use pubsuggest_core::normalize::{
    canonicalize_pairs, count_pair_values, write_transaction, CanonicalizeOptions, ClusterTable, ValueCounts,
};
use pubsuggest_core::rules::{build_prediction_db, generate_rules, rule_candidates, write_predictions};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::manifest::{FileDigest, PipelineManifest, StageRecord};

pub const PAIRS_FILE: &str = "pairs.csv";
pub const PLACE_CLUSTERS_FILE: &str = "clusters_place.csv";
pub const NAME_CLUSTERS_FILE: &str = "clusters_name.csv";
pub const TRANSACTIONS_FILE: &str = "transactions.jsonl";
pub const ITEMSETS_FILE: &str = "itemsets.jsonl";
pub const RULES_CSV_FILE: &str = "rules.csv";
pub const RULES_JSONL_FILE: &str = "rules.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

const STAGES: [&str; 3] = ["extract", "cluster", "mine"];

/// Settings shared by all stages.
#[derive(Debug, Clone, Copy)]
pub struct StageOptions {
    /// Upper bound on worker threads.
    pub workers: usize,
    /// Skip a stage whose recorded inputs, parameters and outputs are all
    /// unchanged.
    pub resume: bool,
}

impl Default for StageOptions {
    fn default() -> Self {
        StageOptions { workers: default_workers(), resume: false }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    Ok(pool.install(f))
}

fn later_stages(stage: &str) -> &'static [&'static str] {
    let pos = STAGES.iter().position(|s| *s == stage).expect("known stage");
    &STAGES[pos + 1..]
}

fn earlier_stages(stage: &str) -> &'static [&'static str] {
    let pos = STAGES.iter().position(|s| *s == stage).expect("known stage");
    &STAGES[..pos]
}

fn up_to_date(manifest: &PipelineManifest, stage: &str, record: &StageRecord, dir: &Path) -> bool {
    manifest.stages.get(stage).is_some_and(|old| old.inputs == record.inputs && old.params == record.params && old.outputs_intact(dir))
}

/// When a stage's input is not the output of the stage recorded before it,
/// the upstream records and counters describe some other run; drop them.
fn detach_upstream(manifest: &mut PipelineManifest, stage: &str, input: &FileDigest) {
    let Some(previous) = earlier_stages(stage).last() else { return };
    let linked = manifest.stages.get(*previous).is_some_and(|r| r.outputs.iter().any(|o| o.sha256 == input.sha256));
    if linked {
        return;
    }
    for s in earlier_stages(stage) {
        manifest.stages.remove(*s);
    }
    let c = &mut manifest.counters;
    c.records_read = None;
    c.records_skipped = None;
    c.encoding_fallbacks = None;
    if stage == "mine" {
        c.pairs_extracted = None;
        c.pairs_rejected = None;
        c.values_rejected = None;
        c.place_clusters = None;
        c.name_clusters = None;
    }
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn finish(w: BufWriter<File>) -> io::Result<()> {
    w.into_inner().map_err(|e| e.into_error())?.sync_all()
}

fn digests(dir: &Path, names: &[&str]) -> anyhow::Result<Vec<FileDigest>> {
    names.iter().map(|n| FileDigest::named(n, dir).with_context(|| format!("hashing {n}"))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InputFormat {
    Iso2709,
    Json,
}

fn detect_format(path: &Path) -> io::Result<InputFormat> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    if matches!(ext.as_deref(), Some("json" | "jsonl" | "ndjson")) {
        return Ok(InputFormat::Json);
    }
    let mut head = [0u8; 64];
    let n = File::open(path)?.read(&mut head)?;
    let first = head[..n].iter().find(|b| !b.is_ascii_whitespace());
    Ok(if first == Some(&b'{') { InputFormat::Json } else { InputFormat::Iso2709 })
}

/// Expands directories (recursively, sorted, hidden entries skipped) into
/// the list of files to read.
pub fn collect_input_files(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<io::Result<_>>()?;
        entries.sort();
        for path in entries {
            if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')) {
                continue;
            }
            if path.is_dir() {
                walk(&path, out)?;
            } else {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            walk(input, &mut files).with_context(|| format!("listing {}", input.display()))?;
        } else if input.exists() {
            files.push(input.clone());
        } else {
            bail!("input {} does not exist", input.display());
        }
    }
    Ok(files)
}

fn extract_file(path: &Path, file_index: usize, options: &ExtractOptions) -> anyhow::Result<(Vec<RawPublisherPair>, ParseStats)> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut pairs = Vec::new();
    let mut ordinal = 0u64;
    let mut take = |record: MarcRecord| {
        ordinal += 1;
        pairs.extend(extract_publisher_pairs(&record, &format!("{file_index}-{ordinal}"), options));
    };
    let stats = match detect_format(path)? {
        InputFormat::Iso2709 => {
            let mut records = Iso2709Reader::new(reader);
            for record in records.by_ref() {
                take(record.with_context(|| format!("reading {}", path.display()))?);
            }
            *records.stats()
        }
        InputFormat::Json => {
            let mut records = JsonRecordReader::new(reader);
            for record in records.by_ref() {
                take(record.with_context(|| format!("reading {}", path.display()))?);
            }
            *records.stats()
        }
    };
    if stats.truncated {
        warn!("{} ends inside a record; the partial record was skipped", path.display());
    }
    if stats.skipped > 0 {
        warn!("{}: skipped {} malformed records", path.display(), stats.skipped);
    }
    Ok((pairs, stats))
}

/// Reads MARC records from `inputs` and writes `pairs.csv` into `out`.
/// Files are parsed in parallel and their pairs written in input order.
pub fn extract(inputs: &[PathBuf], out: &Path, include_264: bool, opts: StageOptions) -> anyhow::Result<PipelineManifest> {
    fs::create_dir_all(out)?;
    let mut manifest = PipelineManifest::load_or_default(out)?;
    let files = collect_input_files(inputs)?;
    let input_digests = in_pool(opts.workers, || {
        files.par_iter().map(|f| FileDigest::of(f).with_context(|| format!("hashing {}", f.display()))).collect::<anyhow::Result<Vec<_>>>()
    })??;
    let mut record = StageRecord {
        inputs: input_digests,
        params: BTreeMap::from([("include_264".to_string(), Value::Bool(include_264))]),
        outputs: Vec::new(),
    };
    if opts.resume && up_to_date(&manifest, "extract", &record, out) {
        info!("extract is up to date");
        return Ok(manifest);
    }

    let options = ExtractOptions { include_264 };
    let per_file: Vec<(Vec<RawPublisherPair>, ParseStats)> =
        in_pool(opts.workers, || files.par_iter().enumerate().map(|(i, f)| extract_file(f, i, &options)).collect::<anyhow::Result<_>>())??;
    let mut stats = ParseStats::default();
    for (_, s) in &per_file {
        stats.merge(s);
    }
    if stats.records == 0 {
        bail!("no input records");
    }

    let mut writer = PairWriter::new(create(out, PAIRS_FILE)?)?;
    let mut pairs = 0u64;
    for (file_pairs, _) in &per_file {
        for pair in file_pairs {
            writer.write(pair)?;
            pairs += 1;
        }
    }
    finish(writer.finish()?)?;
    info!(
        "read {} records from {} files ({} skipped, {} decoded as Latin-1); {} pairs",
        stats.records,
        files.len(),
        stats.skipped,
        stats.encoding_fallbacks,
        pairs
    );

    record.outputs = digests(out, &[PAIRS_FILE])?;
    manifest.record_stage("extract", record, later_stages("extract"));
    manifest.counters = Default::default();
    manifest.counters.records_read = Some(stats.records);
    manifest.counters.records_skipped = Some(stats.skipped);
    manifest.counters.encoding_fallbacks = Some(stats.encoding_fallbacks);
    manifest.counters.pairs_extracted = Some(pairs);
    manifest.save(out)?;
    Ok(manifest)
}

/// Builds place and name cluster tables from a pairs CSV and writes the
/// canonicalized transactions.
pub fn cluster(pairs_path: &Path, out: &Path, role_prefix: bool, opts: StageOptions) -> anyhow::Result<PipelineManifest> {
    fs::create_dir_all(out)?;
    let mut manifest = PipelineManifest::load_or_default(out)?;
    let input = FileDigest::of_input(pairs_path, out).with_context(|| format!("hashing {}", pairs_path.display()))?;
    let mut record = StageRecord {
        inputs: vec![input.clone()],
        params: BTreeMap::from([("role_prefix".to_string(), Value::Bool(role_prefix))]),
        outputs: Vec::new(),
    };
    if opts.resume && up_to_date(&manifest, "cluster", &record, out) {
        info!("cluster is up to date");
        return Ok(manifest);
    }
    detach_upstream(&mut manifest, "cluster", &input);

    let file = File::open(pairs_path).with_context(|| format!("opening {}", pairs_path.display()))?;
    let pairs: Vec<RawPublisherPair> = pubsuggest_core::marc::read_pairs_csv(BufReader::new(file))
        .collect::<Result<_, _>>()
        .with_context(|| format!("reading {}", pairs_path.display()))?;

    let (places, names): (ValueCounts, ValueCounts) = in_pool(opts.workers, || {
        pairs
            .par_chunks(8192)
            .map(count_pair_values)
            .reduce(|| (ValueCounts::default(), ValueCounts::default()), |a, b| (a.0.merge(b.0), a.1.merge(b.1)))
    })?;
    let places = places.into_table();
    let names = names.into_table();
    let (transactions, stats) = canonicalize_pairs(&pairs, &places, &names, CanonicalizeOptions { role_prefix });
    if transactions.is_empty() {
        warn!("no usable place or publisher values; the transaction file is empty");
    }

    let write_table = |name: &str, table: &ClusterTable| -> anyhow::Result<()> {
        let mut w = create(out, name)?;
        table.write_csv(&mut w)?;
        Ok(finish(w)?)
    };
    write_table(PLACE_CLUSTERS_FILE, &places)?;
    write_table(NAME_CLUSTERS_FILE, &names)?;
    let mut w = create(out, TRANSACTIONS_FILE)?;
    for t in &transactions {
        write_transaction(&mut w, t)?;
    }
    finish(w)?;
    info!(
        "{} pairs ({} rejected) -> {} place clusters, {} name clusters, {} transactions",
        stats.pairs,
        stats.pairs_rejected,
        places.len(),
        names.len(),
        stats.transactions
    );

    record.outputs = digests(out, &[PLACE_CLUSTERS_FILE, NAME_CLUSTERS_FILE, TRANSACTIONS_FILE])?;
    manifest.record_stage("cluster", record, later_stages("cluster"));
    let c = &mut manifest.counters;
    c.pairs_extracted = Some(stats.pairs);
    c.pairs_rejected = Some(stats.pairs_rejected);
    c.values_rejected = Some(stats.values_rejected);
    c.place_clusters = Some(places.len() as u64);
    c.name_clusters = Some(names.len() as u64);
    c.transactions = Some(stats.transactions);
    c.itemsets = None;
    c.rule_candidates = None;
    c.rules = None;
    c.predictions = None;
    manifest.save(out)?;
    Ok(manifest)
}

fn read_transaction_items(path: &Path) -> anyhow::Result<Vec<Vec<String>>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let transactions =
        pubsuggest_core::normalize::read_transactions(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    Ok(transactions.into_iter().map(|t| t.items().to_vec()).collect())
}

/// Mines frequent itemsets and rules from a transactions file, then builds
/// the prediction database by replaying each distinct transaction.
pub fn mine(transactions_path: &Path, out: &Path, params: MiningParams, opts: StageOptions) -> anyhow::Result<PipelineManifest> {
    params.validate()?;
    fs::create_dir_all(out)?;
    let mut manifest = PipelineManifest::load_or_default(out)?;
    let input = FileDigest::of_input(transactions_path, out).with_context(|| format!("hashing {}", transactions_path.display()))?;
    let mut record = StageRecord {
        inputs: vec![input.clone()],
        params: BTreeMap::from([
            ("min_support".to_string(), json!(params.min_support)),
            ("min_confidence".to_string(), json!(params.min_confidence)),
        ]),
        outputs: Vec::new(),
    };
    if opts.resume && up_to_date(&manifest, "mine", &record, out) {
        info!("mine is up to date");
        return Ok(manifest);
    }
    detach_upstream(&mut manifest, "mine", &input);

    let transactions = read_transaction_items(transactions_path)?;
    let n = transactions.len() as u64;
    let itemsets: Vec<FrequentItemset> = match mine_with_workers(&transactions, &params, opts.workers) {
        Ok(sets) => sets,
        Err(FpmError::EmptyCorpus) => {
            warn!("{} holds no transactions; writing empty outputs", transactions_path.display());
            Vec::new()
        }
        Err(e) => return Err(e.into()),
    };
    let db = generate_rules(&itemsets, &params, n)?;
    let candidates = rule_candidates(&itemsets);
    let distinct: Vec<Vec<String>> = transactions.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    let predictions = in_pool(opts.workers, || build_prediction_db(&db, distinct))?;
    info!(
        "{} transactions at min_support {} -> {} itemsets, {} rules, {} prediction entries",
        n,
        params.min_support,
        itemsets.len(),
        db.len(),
        predictions.len()
    );

    let mut w = create(out, ITEMSETS_FILE)?;
    write_itemsets(&mut w, &itemsets)?;
    finish(w)?;
    let mut w = create(out, RULES_CSV_FILE)?;
    db.write_csv(&mut w)?;
    finish(w)?;
    let mut w = create(out, RULES_JSONL_FILE)?;
    db.write_jsonl(&mut w)?;
    finish(w)?;
    let mut w = create(out, PREDICTIONS_FILE)?;
    write_predictions(&mut w, &predictions)?;
    finish(w)?;

    record.outputs = digests(out, &[ITEMSETS_FILE, RULES_CSV_FILE, RULES_JSONL_FILE, PREDICTIONS_FILE])?;
    manifest.record_stage("mine", record, later_stages("mine"));
    let c = &mut manifest.counters;
    c.transactions = Some(n);
    c.itemsets = Some(itemsets.len() as u64);
    c.rule_candidates = Some(candidates);
    c.rules = Some(db.len() as u64);
    c.predictions = Some(predictions.len() as u64);
    manifest.save(out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunConfig {
    pub include_264: bool,
    pub role_prefix: bool,
    pub params: MiningParams,
}

/// All three stages in sequence inside one output directory.
pub fn run(inputs: &[PathBuf], out: &Path, config: RunConfig, opts: StageOptions) -> anyhow::Result<PipelineManifest> {
    extract(inputs, out, config.include_264, opts)?;
    cluster(&out.join(PAIRS_FILE), out, config.role_prefix, opts)?;
    mine(&out.join(TRANSACTIONS_FILE), out, config.params, opts)
}

/// Convenience for callers that hold records in memory.
pub fn write_marc_file(path: &Path, records: &[MarcRecord]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        w.write_all(&r.to_iso2709()?)?;
    }
    Ok(finish(w)?)
}
