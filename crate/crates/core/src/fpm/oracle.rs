use std::collections::BTreeSet;

use super::{sort_itemsets, FpmError, FrequentItemset, MiningParams};

pub const ORACLE_MAX_ITEMS: usize = 20;

/// Brute-force reference miner: counts every non-empty subset of the item
/// universe directly against the transactions and keeps those whose support
/// fraction reaches `min_support`. Shares nothing with the FP-growth path.
pub fn apriori_oracle<T, S>(transactions: &[T], params: &MiningParams) -> Result<Vec<FrequentItemset>, FpmError>
where
    T: AsRef<[S]>,
    S: AsRef<str>,
{
    params.validate()?;
    if transactions.is_empty() {
        return Err(FpmError::EmptyCorpus);
    }
    let universe: Vec<&str> =
        transactions.iter().flat_map(|t| t.as_ref().iter().map(AsRef::as_ref)).collect::<BTreeSet<_>>().into_iter().collect();
    if universe.len() > ORACLE_MAX_ITEMS {
        return Err(FpmError::UniverseTooLarge(universe.len()));
    }
    let masks: Vec<u32> = transactions
        .iter()
        .map(|t| {
            t.as_ref().iter().map(|s| 1u32 << universe.binary_search(&s.as_ref()).expect("item in universe")).fold(0, |acc, bit| acc | bit)
        })
        .collect();
    let n = transactions.len() as f64;
    let mut out = Vec::new();
    for candidate in 1u32..(1u32 << universe.len()) {
        let count = masks.iter().filter(|&&m| m & candidate == candidate).count() as u64;
        let support = count as f64 / n;
        if count > 0 && support >= params.min_support {
            let items = (0..universe.len()).filter(|i| candidate & (1 << i) != 0).map(|i| universe[i].to_string()).collect();
            out.push(FrequentItemset { items, count, support });
        }
    }
    sort_itemsets(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_small_corpus() {
        let t = vec![vec!["a", "b"], vec!["b", "c"], vec!["a", "b", "c"], vec!["a", "b"]];
        let got = apriori_oracle(&t, &MiningParams::new(0.5, 0.6).unwrap()).unwrap();
        let flat: Vec<_> = got.iter().map(|s| (s.items.join(","), s.count)).collect();
        assert_eq!(flat, vec![("b".to_string(), 4), ("a".into(), 3), ("a,b".into(), 3), ("b,c".into(), 2), ("c".into(), 2)]);
        let disjoint = vec![vec!["a"], vec!["b"]];
        assert!(apriori_oracle(&disjoint, &MiningParams::new(1.0, 0.6).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn refuses_large_universe() {
        let t: Vec<Vec<String>> = vec![(0..21).map(|i| i.to_string()).collect()];
        assert_eq!(apriori_oracle(&t, &MiningParams::default()), Err(FpmError::UniverseTooLarge(21)));
    }
}
