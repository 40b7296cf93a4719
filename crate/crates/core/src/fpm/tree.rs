//! Arena FP-tree and the recursive growth step.
//!
//! Items inside a tree are dense local ids ordered like the f-list: id 0 is
//! the most frequent item, so every root-to-leaf path is strictly increasing.
//! `labels` maps local ids back to global f-list ranks, which lets a
//! conditional tree keep only the items frequent in its pattern base.

use rustc_hash::FxHashMap;

pub(crate) const ROOT: u32 = 0;
const NIL: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    item: u32,
    count: u64,
    parent: u32,
    first_child: u32,
    next_sibling: u32,
    next_same: u32,
}

#[derive(Debug, Clone, Copy)]
struct HeaderEntry {
    count: u64,
    head: u32,
    tail: u32,
}

/// Prefix tree of f-list ordered transactions with per-item node links.
#[derive(Debug, Clone)]
pub struct FpTree {
    nodes: Vec<Node>,
    header: Vec<HeaderEntry>,
    labels: Vec<u32>,
    children: FxHashMap<(u32, u32), u32>,
}

impl FpTree {
    /// Empty tree over `labels.len()` local items.
    pub(crate) fn with_labels(labels: Vec<u32>) -> Self {
        let root = Node { item: NIL, count: 0, parent: NIL, first_child: NIL, next_sibling: NIL, next_same: NIL };
        let header = vec![HeaderEntry { count: 0, head: NIL, tail: NIL }; labels.len()];
        FpTree { nodes: vec![root], header, labels, children: FxHashMap::default() }
    }

    /// Insert a path of strictly increasing local ids with weight `count`.
    pub(crate) fn insert(&mut self, path: &[u32], count: u64) {
        let mut cur = ROOT;
        for &item in path {
            debug_assert!((item as usize) < self.header.len());
            let next = match self.children.get(&(cur, item)) {
                Some(&child) => child,
                None => {
                    let id = self.nodes.len() as u32;
                    let parent = &mut self.nodes[cur as usize];
                    let sibling = parent.first_child;
                    parent.first_child = id;
                    self.nodes.push(Node { item, count: 0, parent: cur, first_child: NIL, next_sibling: sibling, next_same: NIL });
                    let h = &mut self.header[item as usize];
                    if h.tail == NIL {
                        h.head = id;
                    } else {
                        self.nodes[h.tail as usize].next_same = id;
                    }
                    h.tail = id;
                    self.children.insert((cur, item), id);
                    id
                }
            };
            self.nodes[next as usize].count += count;
            self.header[item as usize].count += count;
            cur = next;
        }
    }

    /// Number of nodes excluding the root.
    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub(crate) fn item_count(&self) -> usize {
        self.header.len()
    }

    pub(crate) fn label(&self, local: u32) -> u32 {
        self.labels[local as usize]
    }

    pub(crate) fn header_count(&self, local: u32) -> u64 {
        self.header[local as usize].count
    }

    fn chain(&self, local: u32) -> impl Iterator<Item = &Node> + '_ {
        let mut cur = self.header[local as usize].head;
        std::iter::from_fn(move || {
            if cur == NIL {
                return None;
            }
            let n = &self.nodes[cur as usize];
            cur = n.next_same;
            Some(n)
        })
    }

    fn child_ids(&self, id: u32) -> impl Iterator<Item = u32> + '_ {
        let mut cur = self.nodes[id as usize].first_child;
        std::iter::from_fn(move || {
            if cur == NIL {
                return None;
            }
            let id = cur;
            cur = self.nodes[id as usize].next_sibling;
            Some(id)
        })
    }

    /// `(labels root→node, count)` for every node, depth-first with children
    /// in ascending item order.
    pub fn node_paths(&self) -> Vec<(Vec<u32>, u64)> {
        let mut out = Vec::with_capacity(self.node_count());
        let mut stack = vec![(ROOT, Vec::new())];
        while let Some((id, path)) = stack.pop() {
            if id != ROOT {
                out.push((path.clone(), self.nodes[id as usize].count));
            }
            let mut kids: Vec<u32> = self.child_ids(id).collect();
            kids.sort_by_key(|&k| std::cmp::Reverse(self.nodes[k as usize].item));
            for k in kids {
                let mut p = path.clone();
                p.push(self.labels[self.nodes[k as usize].item as usize]);
                stack.push((k, p));
            }
        }
        out
    }

    /// Checks the structural invariants: header totals match node counts,
    /// paths strictly increase, and each node-link chain visits exactly the
    /// nodes of its item.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = vec![false; self.nodes.len()];
        for local in 0..self.header.len() as u32 {
            let mut total = 0;
            for n in self.chain(local) {
                if n.item != local {
                    return Err(format!("chain of item {local} reaches item {}", n.item));
                }
                total += n.count;
            }
            let mut cur = self.header[local as usize].head;
            while cur != NIL {
                if std::mem::replace(&mut seen[cur as usize], true) {
                    return Err(format!("node {cur} visited twice"));
                }
                cur = self.nodes[cur as usize].next_same;
            }
            if total != self.header[local as usize].count {
                return Err(format!("item {local}: header count {} != node sum {total}", self.header[local as usize].count));
            }
        }
        if let Some(missed) = seen.iter().skip(1).position(|s| !s) {
            return Err(format!("node {} is on no chain", missed + 1));
        }
        for (id, n) in self.nodes.iter().enumerate().skip(1) {
            if n.parent != ROOT && self.nodes[n.parent as usize].item >= n.item {
                return Err(format!("node {id} does not increase along its path"));
            }
        }
        Ok(())
    }

    /// If the tree is a single chain from the root, its `(local item, count)`
    /// pairs root to leaf.
    fn single_path(&self) -> Option<Vec<(u32, u64)>> {
        let mut out = Vec::new();
        let mut cur = self.nodes[ROOT as usize].first_child;
        while cur != NIL {
            let n = &self.nodes[cur as usize];
            if n.next_sibling != NIL {
                return None;
            }
            out.push((n.item, n.count));
            cur = n.first_child;
        }
        Some(out)
    }

    /// Conditional FP-tree for `local`: its prefix paths weighted by the
    /// node counts, restricted to items reaching `min_count` within them.
    pub(crate) fn conditional(&self, local: u32, min_count: u64) -> Option<FpTree> {
        let mut counts = vec![0u64; local as usize];
        let mut base: Vec<(Vec<u32>, u64)> = Vec::new();
        for n in self.chain(local) {
            let mut path = Vec::new();
            let mut p = n.parent;
            while p != ROOT {
                let pn = &self.nodes[p as usize];
                counts[pn.item as usize] += n.count;
                path.push(pn.item);
                p = pn.parent;
            }
            if !path.is_empty() {
                path.reverse();
                base.push((path, n.count));
            }
        }
        let mut remap = vec![NIL; local as usize];
        let mut labels = Vec::new();
        for (item, &c) in counts.iter().enumerate() {
            if c >= min_count {
                remap[item] = labels.len() as u32;
                labels.push(self.labels[item]);
            }
        }
        if labels.is_empty() {
            return None;
        }
        let mut tree = FpTree::with_labels(labels);
        let mut filtered = Vec::new();
        for (path, count) in base {
            filtered.clear();
            filtered.extend(path.iter().map(|&i| remap[i as usize]).filter(|&i| i != NIL));
            if !filtered.is_empty() {
                tree.insert(&filtered, count);
            }
        }
        Some(tree)
    }
}

/// Emits `{label(local)} ∪ suffix` and everything grown from its conditional
/// tree.
pub(crate) fn mine_item(tree: &FpTree, local: u32, suffix: &mut Vec<u32>, min_count: u64, out: &mut Vec<(Vec<u32>, u64)>) {
    suffix.push(tree.label(local));
    out.push((suffix.clone(), tree.header_count(local)));
    if let Some(cond) = tree.conditional(local, min_count) {
        grow(&cond, suffix, min_count, out);
    }
    suffix.pop();
}

/// Every frequent itemset of `tree`, each extended by `suffix`. All items in
/// `tree` are already frequent in its pattern base.
pub(crate) fn grow(tree: &FpTree, suffix: &mut Vec<u32>, min_count: u64, out: &mut Vec<(Vec<u32>, u64)>) {
    if let Some(path) = tree.single_path() {
        emit_path_subsets(tree, &path, suffix, out);
        return;
    }
    for local in (0..tree.item_count() as u32).rev() {
        mine_item(tree, local, suffix, min_count, out);
    }
}

/// Single-path shortcut: every non-empty subset of the path is frequent with
/// the count of its deepest node.
fn emit_path_subsets(tree: &FpTree, path: &[(u32, u64)], suffix: &[u32], out: &mut Vec<(Vec<u32>, u64)>) {
    let len = path.len();
    assert!(len < 64, "single path of {len} items would emit 2^{len} itemsets");
    for mask in 1u64..(1u64 << len) {
        let deepest = 63 - mask.leading_zeros() as usize;
        let mut items = suffix.to_vec();
        items.extend((0..len).filter(|i| mask & (1 << i) != 0).map(|i| tree.label(path[i].0)));
        out.push((items, path[deepest].1));
    }
}
