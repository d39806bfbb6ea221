//! State networks and state polynetworks.
//!
//! An [`Spn`] holds one node universe and one edge set per key. Every node
//! belongs to every SN; a node with no edges in an SN is simply isolated
//! there.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub type NodeId = u32;
pub type NodeType = u16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpnError {
    #[error("SN keys differ")]
    KeyMismatch,
    #[error("duplicate SN key {0}")]
    DuplicateKey(String),
    #[error("edge ({1}, {2}) in SN {0} has a missing endpoint")]
    DanglingEdge(usize, NodeId, NodeId),
    #[error("self-loop on {1} in SN {0}")]
    SelfLoop(usize, NodeId),
    #[error("node {0} has a non-finite position")]
    BadPosition(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpnNode {
    pub ty: NodeType,
    pub pos: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Spn {
    pub keys: Vec<String>,
    pub nodes: BTreeMap<NodeId, SpnNode>,
    /// one edge set per key, (from, to)
    pub edges: Vec<BTreeSet<(NodeId, NodeId)>>,
}

impl Spn {
    pub fn new<S: Into<String>>(keys: impl IntoIterator<Item = S>) -> Spn {
        let keys: Vec<String> = keys.into_iter().map(Into::into).collect();
        let edges = vec![BTreeSet::new(); keys.len()];
        Spn { keys, nodes: BTreeMap::new(), edges }
    }

    pub fn add_node(&mut self, id: NodeId, ty: NodeType, pos: [f64; 2]) {
        self.nodes.insert(id, SpnNode { ty, pos });
    }

    pub fn add_edge(&mut self, k: usize, a: NodeId, b: NodeId) {
        debug_assert!(self.nodes.contains_key(&a) && self.nodes.contains_key(&b) && a != b);
        self.edges[k].insert((a, b));
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(BTreeSet::len).sum()
    }

    pub fn validate(&self) -> Result<(), SpnError> {
        let mut seen = BTreeSet::new();
        for k in &self.keys {
            if !seen.insert(k) {
                return Err(SpnError::DuplicateKey(k.clone()));
            }
        }
        if self.edges.len() != self.keys.len() {
            return Err(SpnError::KeyMismatch);
        }
        for (id, n) in &self.nodes {
            if !n.pos.iter().all(|v| v.is_finite()) {
                return Err(SpnError::BadPosition(*id));
            }
        }
        for (k, es) in self.edges.iter().enumerate() {
            for &(a, b) in es {
                if a == b {
                    return Err(SpnError::SelfLoop(k, a));
                }
                if !self.nodes.contains_key(&a) || !self.nodes.contains_key(&b) {
                    return Err(SpnError::DanglingEdge(k, a, b));
                }
            }
        }
        Ok(())
    }

    pub fn same_keys(&self, other: &Spn) -> Result<(), SpnError> {
        if self.keys == other.keys {
            Ok(())
        } else {
            Err(SpnError::KeyMismatch)
        }
    }

    pub fn preds(&self, k: usize, n: NodeId) -> Vec<NodeId> {
        self.edges[k].iter().filter(|e| e.1 == n).map(|e| e.0).collect()
    }

    pub fn succs(&self, k: usize, n: NodeId) -> Vec<NodeId> {
        self.edges[k].range((n, 0)..=(n, NodeId::MAX)).map(|e| e.1).collect()
    }

    /// Path of at least one edge, by search.
    pub fn has_path(&self, k: usize, a: NodeId, b: NodeId) -> bool {
        let mut seen = BTreeSet::new();
        let mut q: VecDeque<NodeId> = self.succs(k, a).into();
        while let Some(n) = q.pop_front() {
            if n == b {
                return true;
            }
            if seen.insert(n) {
                q.extend(self.succs(k, n));
            }
        }
        false
    }

    /// Removes `n` from every SN, linking its predecessors to its
    /// successors. Returns the added edges.
    pub fn remove_node_with_rerelation(
        &mut self,
        n: NodeId,
        banned: &[BTreeSet<(NodeId, NodeId)>],
    ) -> Vec<(usize, NodeId, NodeId)> {
        let mut added = Vec::new();
        for k in 0..self.edges.len() {
            let ps = self.preds(k, n);
            let ss = self.succs(k, n);
            self.edges[k].retain(|e| e.0 != n && e.1 != n);
            for &p in &ps {
                for &s in &ss {
                    if p != s && !banned[k].contains(&(p, s)) && self.edges[k].insert((p, s)) {
                        added.push((k, p, s));
                    }
                }
            }
        }
        self.nodes.remove(&n);
        added
    }

    /// Removes edge (a, b) from SN `k`, adding (p, s) for every predecessor
    /// p of a and successor s of b. Returns the added edges.
    pub fn remove_edge_with_rerelation(
        &mut self,
        k: usize,
        a: NodeId,
        b: NodeId,
        banned: &BTreeSet<(NodeId, NodeId)>,
    ) -> Vec<(NodeId, NodeId)> {
        let ps = self.preds(k, a);
        let ss = self.succs(k, b);
        self.edges[k].remove(&(a, b));
        let mut added = Vec::new();
        for &p in &ps {
            for &s in &ss {
                if p != s && (p, s) != (a, b) && !banned.contains(&(p, s)) && self.edges[k].insert((p, s)) {
                    added.push((p, s));
                }
            }
        }
        added
    }

    /// All SNs drawn together, one edge style per key. Positions are pinned
    /// so the output renders like the image it came from.
    pub fn to_dot(&self, type_name: impl Fn(NodeType) -> String) -> String {
        let mut s = String::from("digraph spn {\n  node [shape=circle, fontsize=8];\n");
        for (id, n) in &self.nodes {
            let _ = writeln!(s, "  n{id} [label=\"{}\", pos=\"{:.2},{:.2}!\"];", type_name(n.ty), n.pos[0], -n.pos[1]);
        }
        for (k, es) in self.edges.iter().enumerate() {
            for (a, b) in es {
                let _ = writeln!(s, "  n{a} -> n{b} [label=\"{}\"];", self.keys[k]);
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Fixed-width bit rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct BitMatrix {
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    pub(crate) fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        BitMatrix { words, bits: vec![0; words * n] }
    }

    #[inline]
    pub(crate) fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
    }

    fn or_row_into(&mut self, from: usize, into: usize) {
        for w in 0..self.words {
            let v = self.bits[from * self.words + w];
            self.bits[into * self.words + w] |= v;
        }
    }
}

/// An SPN prepared for repeated path queries: dense indices, nodes grouped
/// by type and the transitive closure of every SN.
#[derive(Debug, Clone)]
pub struct Observed {
    pub spn: Spn,
    pub ids: Vec<NodeId>,
    pub index: BTreeMap<NodeId, usize>,
    pub types: Vec<NodeType>,
    pub pos: Vec<[f64; 2]>,
    pub by_type: BTreeMap<NodeType, Vec<usize>>,
    reach: Vec<BitMatrix>,
}

impl Observed {
    pub fn new(spn: Spn) -> Observed {
        let ids: Vec<NodeId> = spn.nodes.keys().copied().collect();
        let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let types: Vec<NodeType> = spn.nodes.values().map(|n| n.ty).collect();
        let pos: Vec<[f64; 2]> = spn.nodes.values().map(|n| n.pos).collect();
        let mut by_type: BTreeMap<NodeType, Vec<usize>> = BTreeMap::new();
        for (i, &t) in types.iter().enumerate() {
            by_type.entry(t).or_default().push(i);
        }
        let n = ids.len();
        let reach = spn
            .edges
            .iter()
            .map(|es| {
                let mut m = BitMatrix::new(n);
                for (a, b) in es {
                    m.set(index[a], index[b]);
                }
                // Warshall over rows
                for k in 0..n {
                    for i in 0..n {
                        if m.get(i, k) {
                            m.or_row_into(k, i);
                        }
                    }
                }
                m
            })
            .collect();
        Observed { spn, ids, index, types, pos, by_type, reach }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Path of at least one edge between dense indices in SN `k`.
    #[inline]
    pub fn reach(&self, k: usize, a: usize, b: usize) -> bool {
        self.reach[k].get(a, b)
    }

    pub fn has_path(&self, k: usize, a: NodeId, b: NodeId) -> bool {
        match (self.index.get(&a), self.index.get(&b)) {
            (Some(&i), Some(&j)) => self.reach(k, i, j),
            _ => false,
        }
    }
}
