//! Frequent itemset mining with FP-growth.
//!
//! [`mine`] counts items, builds the f-list and one global [`FpTree`], then
//! grows conditional trees per header item. With the `parallel` feature the
//! header items are dealt round-robin into one group per worker and the
//! groups are mined independently against the shared, read-only global tree;
//! the final sort makes the output independent of the worker count.

mod oracle;
mod tree;

use std::io::{self, BufRead, Write};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{apriori_oracle, ORACLE_MAX_ITEMS};
pub use tree::FpTree;

#[derive(Debug, Error, PartialEq)]
pub enum FpmError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{name} must be in (0, 1], got {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("oracle refuses {0} distinct items (limit {ORACLE_MAX_ITEMS})")]
    UniverseTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningParams {
    pub min_support: f64,
    pub min_confidence: f64,
}

impl MiningParams {
    pub const DEFAULT_MIN_SUPPORT: f64 = 0.00001;
    pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.6;

    pub fn new(min_support: f64, min_confidence: f64) -> Result<Self, FpmError> {
        let p = MiningParams { min_support, min_confidence };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FpmError> {
        let check = |name, value: f64| {
            if value > 0.0 && value <= 1.0 {
                Ok(())
            } else {
                Err(FpmError::InvalidParam { name, value })
            }
        };
        check("min_support", self.min_support)?;
        check("min_confidence", self.min_confidence)
    }

    /// Smallest count `k` with `k / n >= min_support`: the integer form of
    /// `ceil(min_support * n)`, computed so that float error in the product
    /// cannot bump the threshold (0.1 * 30 is 3.0000000000000004).
    pub fn min_count(&self, n: u64) -> u64 {
        let nf = n as f64;
        let mut k = (self.min_support * nf).ceil().max(1.0) as u64;
        while k > 1 && ((k - 1) as f64) / nf >= self.min_support {
            k -= 1;
        }
        while (k as f64) / nf < self.min_support {
            k += 1;
        }
        k
    }
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams { min_support: Self::DEFAULT_MIN_SUPPORT, min_confidence: Self::DEFAULT_MIN_CONFIDENCE }
    }
}

/// Frequent items by descending count, ties by ascending item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FList {
    entries: Vec<(String, u64)>,
    transactions: u64,
    min_count: u64,
}

impl FList {
    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn transaction_count(&self) -> u64 {
        self.transactions
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn item(&self, rank: u32) -> &str {
        &self.entries[rank as usize].0
    }

    fn ranks(&self) -> FxHashMap<&str, u32> {
        self.entries.iter().enumerate().map(|(i, (s, _))| (s.as_str(), i as u32)).collect()
    }
}

pub fn build_flist<T, S>(transactions: &[T], params: &MiningParams) -> Result<FList, FpmError>
where
    T: AsRef<[S]>,
    S: AsRef<str>,
{
    params.validate()?;
    if transactions.is_empty() {
        return Err(FpmError::EmptyCorpus);
    }
    let n = transactions.len() as u64;
    let min_count = params.min_count(n);
    let mut counts: FxHashMap<&str, u64> = FxHashMap::default();
    let mut seen: Vec<&str> = Vec::new();
    for t in transactions {
        seen.clear();
        seen.extend(t.as_ref().iter().map(AsRef::as_ref));
        seen.sort_unstable();
        seen.dedup();
        for item in &seen {
            *counts.entry(item).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(String, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).map(|(s, c)| (s.to_string(), c)).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(FList { entries, transactions: n, min_count })
}

/// Global tree: each transaction filtered to f-list items and inserted in
/// f-list order. Local ids equal f-list ranks.
pub fn build_fptree<T, S>(transactions: &[T], flist: &FList) -> FpTree
where
    T: AsRef<[S]>,
    S: AsRef<str>,
{
    let ranks = flist.ranks();
    let mut tree = FpTree::with_labels((0..flist.len() as u32).collect());
    let mut path = Vec::new();
    for t in transactions {
        path.clear();
        path.extend(t.as_ref().iter().filter_map(|s| ranks.get(s.as_ref()).copied()));
        path.sort_unstable();
        path.dedup();
        if !path.is_empty() {
            tree.insert(&path, 1);
        }
    }
    tree
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequentItemset {
    /// Ascending.
    pub items: Vec<String>,
    pub count: u64,
    pub support: f64,
}

/// Output order: descending count, then ascending item list.
pub fn sort_itemsets(itemsets: &mut [FrequentItemset]) {
    itemsets.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.items.cmp(&b.items)));
}

pub fn mine<T, S>(transactions: &[T], params: &MiningParams) -> Result<Vec<FrequentItemset>, FpmError>
where
    T: AsRef<[S]>,
    S: AsRef<str>,
{
    mine_with_workers(transactions, params, 1)
}

/// FP-growth over `workers` threads (ignored without the `parallel`
/// feature). Output is identical for every worker count.
pub fn mine_with_workers<T, S>(transactions: &[T], params: &MiningParams, workers: usize) -> Result<Vec<FrequentItemset>, FpmError>
where
    T: AsRef<[S]>,
    S: AsRef<str>,
{
    let flist = build_flist(transactions, params)?;
    let tree = build_fptree(transactions, &flist);
    log::debug!("f-list has {} items, tree has {} nodes", flist.len(), tree.node_count());
    let raw = grow_all(&tree, flist.min_count(), workers.max(1));
    let n = flist.transaction_count() as f64;
    let mut out: Vec<FrequentItemset> = raw
        .into_iter()
        .map(|(ranks, count)| {
            let mut items: Vec<String> = ranks.iter().map(|&r| flist.item(r).to_string()).collect();
            items.sort_unstable();
            FrequentItemset { items, count, support: count as f64 / n }
        })
        .collect();
    sort_itemsets(&mut out);
    Ok(out)
}

fn grow_all(tree: &FpTree, min_count: u64, workers: usize) -> Vec<(Vec<u32>, u64)> {
    let items = tree.item_count() as u32;
    if workers == 1 || items < 2 {
        let mut out = Vec::new();
        tree::grow(tree, &mut Vec::new(), min_count, &mut out);
        return out;
    }
    grow_groups(tree, min_count, workers)
}

#[cfg(feature = "parallel")]
fn grow_groups(tree: &FpTree, min_count: u64, workers: usize) -> Vec<(Vec<u32>, u64)> {
    use rayon::prelude::*;

    let items = tree.item_count() as u32;
    let mine_group = |group: usize| {
        let mut out = Vec::new();
        let mut suffix = Vec::new();
        for local in (group as u32..items).step_by(workers) {
            tree::mine_item(tree, local, &mut suffix, min_count, &mut out);
        }
        out
    };
    let run = || (0..workers).into_par_iter().flat_map_iter(mine_group).collect::<Vec<_>>();
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(run),
        Err(e) => {
            log::warn!("could not start {workers} mining threads ({e}); using the global pool");
            run()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn grow_groups(tree: &FpTree, min_count: u64, _workers: usize) -> Vec<(Vec<u32>, u64)> {
    let mut out = Vec::new();
    tree::grow(tree, &mut Vec::new(), min_count, &mut out);
    out
}

pub fn write_itemsets<W: Write>(mut w: W, itemsets: &[FrequentItemset]) -> io::Result<()> {
    for set in itemsets {
        serde_json::to_writer(&mut w, set)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_itemsets<R: BufRead>(r: R) -> io::Result<Vec<FrequentItemset>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let set = serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push(set);
    }
    Ok(out)
}
