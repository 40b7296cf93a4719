//! Run manifest written next to the stage outputs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> io::Result<Self> {
        Ok(FileDigest { path: path.display().to_string(), sha256: sha256_file(path)? })
    }

    /// Like [`FileDigest::of`], but a file inside `dir` is recorded by its
    /// path relative to `dir`.
    pub fn of_input(path: &Path, dir: &Path) -> io::Result<Self> {
        let mut d = Self::of(path)?;
        if let Ok(rel) = path.strip_prefix(dir) {
            d.path = rel.display().to_string();
        }
        Ok(d)
    }

    /// Digest recorded under a name relative to the output directory.
    pub fn named(name: &str, dir: &Path) -> io::Result<Self> {
        Ok(FileDigest { path: name.to_string(), sha256: sha256_file(&dir.join(name))? })
    }
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// Inputs, parameters and outputs of one completed stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub inputs: Vec<FileDigest>,
    pub params: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<FileDigest>,
}

impl StageRecord {
    /// True when every recorded output still exists with the same digest.
    pub fn outputs_intact(&self, dir: &Path) -> bool {
        self.outputs.iter().all(|o| sha256_file(&dir.join(&o.path)).is_ok_and(|d| d == o.sha256))
    }
}

/// Counters accumulated along the pipeline. A stage that has not run leaves
/// its counters unset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records_read: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records_skipped: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoding_fallbacks: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs_extracted: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs_rejected: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values_rejected: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub place_clusters: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name_clusters: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transactions: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub itemsets: Option<u64>,
    /// Candidate (itemset, consequent) pairs the rules were drawn from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule_candidates: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rules: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<u64>,
}

impl Counters {
    /// Checks that counters never grow along the pipeline. Pairs of counters
    /// where either side is unset are not compared.
    pub fn check_monotone(&self) -> Result<(), String> {
        let chain = [
            ("pairs_rejected", self.pairs_rejected, "pairs_extracted", self.pairs_extracted),
            ("transactions", self.transactions, "pairs_extracted", self.pairs_extracted),
            ("transactions", self.transactions, "records_read", self.records_read),
            ("rules", self.rules, "rule_candidates", self.rule_candidates),
            ("predictions", self.predictions, "transactions", self.transactions),
        ];
        for (small_name, small, big_name, big) in chain {
            if let (Some(s), Some(b)) = (small, big) {
                if s > b {
                    return Err(format!("{small_name} ({s}) exceeds {big_name} ({b})"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub stages: BTreeMap<String, StageRecord>,
    pub counters: Counters,
}

impl PipelineManifest {
    /// Loads `dir/manifest.json`, or an empty manifest when there is none.
    pub fn load_or_default(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        if let Err(e) = self.counters.check_monotone() {
            bail!("manifest counters are inconsistent: {e}");
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    /// Records a stage and drops the records of every later stage, whose
    /// inputs are now stale.
    pub fn record_stage(&mut self, stage: &str, record: StageRecord, later: &[&str]) {
        for s in later {
            self.stages.remove(*s);
        }
        self.stages.insert(stage.to_string(), record);
    }
}
