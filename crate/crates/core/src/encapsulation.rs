//! Behavior encapsulation: alternative ANs are reduced to the skeleton they
//! all share, and each skeleton edge carries the sub-networks that realize
//! it, encapsulated again recursively.
//!
//! Everything here is generic over the node label so tests can use plain
//! strings. Nodes are compared by label across networks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{Debug, Write as _};

use serde::{Deserialize, Serialize};

use crate::planner::{ActionNetwork, Node};

pub const DEFAULT_PATH_CAP: usize = 10_000;
pub const DEFAULT_SPLIT_CAP: usize = 10_000;
pub const DEFAULT_DEPTH_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncapsulationError {
    #[error("more than {cap} alternative networks")]
    TooManyAlternatives { cap: usize },
    #[error("more than {cap} simple paths")]
    TooManyPaths { cap: usize },
    #[error("encapsulation deeper than {cap} levels")]
    TooDeep { cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    pub alternatives: usize,
    pub paths: usize,
    pub depth: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { alternatives: DEFAULT_SPLIT_CAP, paths: DEFAULT_PATH_CAP, depth: DEFAULT_DEPTH_CAP }
    }
}

/// Directed graph with edges (predecessor, successor).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Graph<N: Ord> {
    pub nodes: BTreeSet<N>,
    pub edges: BTreeSet<(N, N)>,
}

impl<N: Ord> Default for Graph<N> {
    fn default() -> Self {
        Graph { nodes: BTreeSet::new(), edges: BTreeSet::new() }
    }
}

impl<N: Ord + Copy + Debug> Graph<N> {
    pub fn from_edges(edges: impl IntoIterator<Item = (N, N)>) -> Self {
        let mut g = Graph::default();
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn add_edge(&mut self, a: N, b: N) {
        self.nodes.insert(a);
        self.nodes.insert(b);
        self.edges.insert((a, b));
    }

    pub fn preds(&self, n: N) -> Vec<N> {
        self.edges.iter().filter(|e| e.1 == n).map(|e| e.0).collect()
    }

    pub fn succs(&self, n: N) -> Vec<N> {
        self.edges.iter().filter(|e| e.0 == n).map(|e| e.1).collect()
    }

    fn succ_map(&self) -> BTreeMap<N, Vec<N>> {
        let mut m: BTreeMap<N, Vec<N>> = BTreeMap::new();
        for &(a, b) in &self.edges {
            m.entry(a).or_default().push(b);
        }
        m
    }

    /// Path of one or more edges from `a` to `b`.
    pub fn has_path(&self, a: N, b: N) -> bool {
        let succ = self.succ_map();
        let mut seen = BTreeSet::new();
        let mut q: VecDeque<N> = succ.get(&a).into_iter().flatten().copied().collect();
        while let Some(n) = q.pop_front() {
            if n == b {
                return true;
            }
            if seen.insert(n) {
                q.extend(succ.get(&n).into_iter().flatten().copied());
            }
        }
        false
    }

    pub fn ancestors(&self, n: N) -> BTreeSet<N> {
        let mut pred: BTreeMap<N, Vec<N>> = BTreeMap::new();
        for &(a, b) in &self.edges {
            pred.entry(b).or_default().push(a);
        }
        let mut seen = BTreeSet::new();
        let mut q: VecDeque<N> = pred.get(&n).into_iter().flatten().copied().collect();
        while let Some(m) = q.pop_front() {
            if seen.insert(m) {
                q.extend(pred.get(&m).into_iter().flatten().copied());
            }
        }
        seen.remove(&n);
        seen
    }

    pub fn induced(&self, keep: &BTreeSet<N>) -> Graph<N> {
        Graph {
            nodes: self.nodes.intersection(keep).copied().collect(),
            edges: self.edges.iter().filter(|e| keep.contains(&e.0) && keep.contains(&e.1)).copied().collect(),
        }
    }

    pub fn merge(&mut self, other: &Graph<N>) {
        self.nodes.extend(other.nodes.iter().copied());
        self.edges.extend(other.edges.iter().copied());
    }

    /// Union of the nodes on all simple paths `a` to `b`.
    pub fn simple_path_nodes(&self, a: N, b: N, cap: usize) -> Result<BTreeSet<N>, EncapsulationError> {
        let succ = self.succ_map();
        let mut out = BTreeSet::new();
        let mut count = 0usize;
        let mut path = vec![a];
        let mut on_path = BTreeSet::from([a]);
        // explicit DFS; each frame keeps the index of the next successor
        let mut stack: Vec<usize> = vec![0];
        while let Some(i) = stack.last_mut() {
            let cur = *path.last().unwrap();
            let next = succ.get(&cur).and_then(|v| v.get(*i)).copied();
            *i += 1;
            match next {
                None => {
                    stack.pop();
                    on_path.remove(&path.pop().unwrap());
                }
                Some(n) if n == b => {
                    count += 1;
                    if count > cap {
                        return Err(EncapsulationError::TooManyPaths { cap });
                    }
                    out.extend(path.iter().copied());
                    out.insert(b);
                }
                Some(n) if !on_path.contains(&n) => {
                    path.push(n);
                    on_path.insert(n);
                    stack.push(0);
                }
                Some(_) => {}
            }
        }
        Ok(out)
    }

    pub fn to_dot(&self, name: &str, label: impl Fn(&N) -> String) -> String {
        let mut s = format!("digraph \"{name}\" {{\n");
        for n in &self.nodes {
            let _ = writeln!(s, "  \"{}\";", label(n));
        }
        for (a, b) in &self.edges {
            let _ = writeln!(s, "  \"{}\" -> \"{}\";", label(a), label(b));
        }
        s.push_str("}\n");
        s
    }
}

impl Graph<Node> {
    /// The network without its dead nodes.
    pub fn from_an(an: &ActionNetwork) -> Graph<Node> {
        let keep: BTreeSet<Node> = an.nodes.difference(&an.dead).copied().collect();
        Graph { nodes: an.nodes.clone(), edges: an.edges.clone() }.induced(&keep)
    }
}

/// Removes edge (n0, n1) and links every predecessor of n0 to every
/// successor of n1. Self-loops and `banned` edges are not added.
pub fn remove_with_rerelation<N: Ord + Copy + Debug>(g: &mut Graph<N>, n0: N, n1: N, banned: &BTreeSet<(N, N)>) {
    let ps = g.preds(n0);
    let ss = g.succs(n1);
    g.edges.remove(&(n0, n1));
    for &p in &ps {
        for &s in &ss {
            if p != s && !banned.contains(&(p, s)) && (p, s) != (n0, n1) {
                g.edges.insert((p, s));
            }
        }
    }
}

/// Removes a node, linking its predecessors to its successors.
pub fn remove_node_with_rerelation<N: Ord + Copy + Debug>(g: &mut Graph<N>, n: N, banned: &BTreeSet<(N, N)>) {
    let ps = g.preds(n);
    let ss = g.succs(n);
    g.edges.retain(|e| e.0 != n && e.1 != n);
    g.nodes.remove(&n);
    for &p in &ps {
        for &s in &ss {
            if p != s && p != n && s != n && !banned.contains(&(p, s)) {
                g.edges.insert((p, s));
            }
        }
    }
}

/// One network per combination of conditioning alternatives. A node with
/// two or more predecessors for which `is_alternative` holds keeps exactly
/// one of them; nodes no longer upstream of a goal are dropped.
pub fn split_alternatives<N: Ord + Copy + Debug>(
    g: &Graph<N>,
    goals: &[N],
    is_alternative: impl Fn(&N) -> bool,
    cap: usize,
) -> Result<Vec<Graph<N>>, EncapsulationError> {
    let mut pred: BTreeMap<N, Vec<N>> = BTreeMap::new();
    for &(a, b) in &g.edges {
        pred.entry(b).or_default().push(a);
    }
    let alts = |n: &N| -> Vec<N> { pred.get(n).into_iter().flatten().copied().filter(|p| is_alternative(p)).collect() };
    let choice: BTreeMap<N, Vec<N>> = g.nodes.iter().map(|&n| (n, alts(&n))).filter(|(_, v)| v.len() >= 2).collect();

    let mut out = Vec::new();
    let mut pending = vec![BTreeMap::<N, N>::new()];
    while let Some(assign) = pending.pop() {
        let mut keep = BTreeSet::new();
        let mut stack: Vec<N> = goals.iter().copied().filter(|n| g.nodes.contains(n)).collect();
        let mut branch = None;
        'walk: while let Some(n) = stack.pop() {
            if !keep.insert(n) {
                continue;
            }
            for &p in pred.get(&n).into_iter().flatten() {
                if choice.contains_key(&n) && is_alternative(&p) {
                    match assign.get(&n) {
                        Some(&c) if c == p => stack.push(p),
                        Some(_) => {}
                        None => {
                            branch = Some(n);
                            break 'walk;
                        }
                    }
                } else {
                    stack.push(p);
                }
            }
        }
        if let Some(n) = branch {
            // reversed so the first option is produced first
            for &opt in choice[&n].iter().rev() {
                let mut a = assign.clone();
                a.insert(n, opt);
                pending.push(a);
            }
            continue;
        }
        let edges = g
            .edges
            .iter()
            .filter(|&&(p, n)| {
                keep.contains(&p)
                    && keep.contains(&n)
                    && !(choice.contains_key(&n) && is_alternative(&p) && assign.get(&n) != Some(&p))
            })
            .copied()
            .collect();
        out.push(Graph { nodes: keep, edges });
        if out.len() > cap {
            return Err(EncapsulationError::TooManyAlternatives { cap });
        }
    }
    Ok(out)
}

/// The skeleton shared by all networks: nodes missing from any of them are
/// removed, then edges without a matching path in every network, until
/// nothing changes.
pub fn construct_encapsulated_an<N: Ord + Copy + Debug>(nets: &[Graph<N>]) -> Graph<N> {
    let mut ean = nets[0].clone();
    if nets.len() == 1 {
        return ean;
    }
    let mut banned = BTreeSet::new();
    let missing: Vec<N> = ean.nodes.iter().copied().filter(|n| !nets.iter().all(|g| g.nodes.contains(n))).collect();
    for n in missing {
        remove_node_with_rerelation(&mut ean, n, &banned);
    }
    let mut path_ok: BTreeMap<(N, N), bool> = BTreeMap::new();
    loop {
        let mut changed = false;
        let snapshot: Vec<(N, N)> = ean.edges.iter().copied().collect();
        for e in snapshot {
            if !ean.edges.contains(&e) {
                continue;
            }
            let ok = *path_ok.entry(e).or_insert_with(|| nets.iter().all(|g| g.has_path(e.0, e.1)));
            if !ok {
                banned.insert(e);
                remove_with_rerelation(&mut ean, e.0, e.1, &banned);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    ean
}

/// Nodes on simple paths `source` to `target`, plus everything upstream of
/// the intermediate nodes, as an induced sub-network.
pub fn get_connecting_subnetwork<N: Ord + Copy + Debug>(
    g: &Graph<N>,
    source: N,
    target: N,
    cap: usize,
) -> Result<Graph<N>, EncapsulationError> {
    let on_paths = g.simple_path_nodes(source, target, cap)?;
    let mut sub = g.induced(&on_paths);
    let mut upstream = BTreeSet::new();
    for &n in &on_paths {
        if n != source && n != target {
            upstream.insert(n);
            upstream.extend(g.ancestors(n));
        }
    }
    sub.merge(&g.induced(&upstream));
    Ok(sub)
}

/// Nodes of a connecting sub-network that belong to the pathway itself:
/// not the endpoints and not upstream of the source.
fn interior<N: Ord + Copy + Debug>(parent: &Graph<N>, sub: &Graph<N>, source: N, target: N) -> BTreeSet<N> {
    let before = parent.ancestors(source);
    sub.nodes.iter().copied().filter(|n| *n != source && *n != target && !before.contains(n)).collect()
}

/// Groups of indices whose sets share a node, transitively.
pub fn group_by_shared_nodes<N: Ord>(sets: &[BTreeSet<N>]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..sets.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if !sets[i].is_disjoint(&sets[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..sets.len() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Encapsulated<N: Ord> {
    Leaf(Graph<N>),
    Ean {
        graph: Graph<N>,
        /// per skeleton edge, one entry per group of pathways
        payloads: BTreeMap<String, Vec<Encapsulated<N>>>,
    },
}

pub fn edge_key<N: Debug>(a: &N, b: &N) -> String {
    format!("{a:?} -> {b:?}")
}

impl<N: Ord + Copy + Debug> Encapsulated<N> {
    pub fn graph(&self) -> &Graph<N> {
        match self {
            Encapsulated::Leaf(g) | Encapsulated::Ean { graph: g, .. } => g,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Encapsulated::Leaf(_) => 0,
            Encapsulated::Ean { payloads, .. } => 1 + payloads.values().flatten().map(|p| p.depth()).max().unwrap_or(0),
        }
    }

    /// Every level's graph with its path from the top, for flat export.
    pub fn levels(&self) -> Vec<(String, &Graph<N>)> {
        let mut out = Vec::new();
        self.collect_levels("top".to_string(), &mut out);
        out
    }

    fn collect_levels<'a>(&'a self, name: String, out: &mut Vec<(String, &'a Graph<N>)>) {
        out.push((name.clone(), self.graph()));
        if let Encapsulated::Ean { payloads, .. } = self {
            for (k, groups) in payloads {
                for (i, g) in groups.iter().enumerate() {
                    g.collect_levels(format!("{name} / {k} #{i}"), out);
                }
            }
        }
    }
}

pub fn encapsulate_behavior<N: Ord + Copy + Debug>(
    nets: &[Graph<N>],
    caps: Caps,
) -> Result<Encapsulated<N>, EncapsulationError> {
    encapsulate_at(nets, caps, 0)
}

fn encapsulate_at<N: Ord + Copy + Debug>(
    nets: &[Graph<N>],
    caps: Caps,
    depth: usize,
) -> Result<Encapsulated<N>, EncapsulationError> {
    if depth > caps.depth {
        return Err(EncapsulationError::TooDeep { cap: caps.depth });
    }
    let unique: Vec<Graph<N>> = nets.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if unique.len() == 1 {
        return Ok(Encapsulated::Leaf(unique.into_iter().next().unwrap()));
    }
    let ean = construct_encapsulated_an(&unique);
    let mut payloads = BTreeMap::new();
    for &(s, t) in &ean.edges {
        let mut subs = Vec::new();
        let mut inner = Vec::new();
        for g in &unique {
            let sub = get_connecting_subnetwork(g, s, t, caps.paths)?;
            let i = interior(g, &sub, s, t);
            // a direct edge needs no payload
            if !i.is_empty() && !subs.contains(&sub) {
                subs.push(sub);
                inner.push(i);
            }
        }
        if subs.is_empty() {
            continue;
        }
        let mut entry = Vec::new();
        for grp in group_by_shared_nodes(&inner) {
            let members: Vec<Graph<N>> = grp.iter().map(|&i| subs[i].clone()).collect();
            let same_as_parent = members.len() == unique.len() && members.iter().all(|m| unique.contains(m));
            if members.len() == 1 || same_as_parent {
                entry.extend(members.into_iter().map(Encapsulated::Leaf));
            } else {
                entry.push(encapsulate_at(&members, caps, depth + 1)?);
            }
        }
        payloads.insert(edge_key(&s, &t), entry);
    }
    Ok(Encapsulated::Ean { graph: ean, payloads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(edges: &[(&'static str, &'static str)]) -> Graph<&'static str> {
        Graph::from_edges(edges.iter().copied())
    }

    /// The two alternative networks of the abstract example, X to Z.
    pub(crate) fn two_networks() -> [Graph<&'static str>; 2] {
        [
            g(&[("X", "A0"), ("A0", "D0"), ("D0", "E0"), ("E0", "Y"), ("Y", "Z"), ("B0", "Z")]),
            g(&[("X", "A0"), ("A0", "D0"), ("D0", "C2"), ("C2", "E1"), ("E1", "Y"), ("Y", "Z"), ("B1", "C2")]),
        ]
    }

    #[test]
    fn two_network_skeleton_and_payload() {
        let nets = two_networks();
        let ean = construct_encapsulated_an(&nets);
        assert_eq!(ean, g(&[("X", "A0"), ("A0", "D0"), ("D0", "Y"), ("Y", "Z")]));
        let enc = encapsulate_behavior(&nets, Caps::default()).unwrap();
        let Encapsulated::Ean { payloads, .. } = &enc else { panic!() };
        let p = &payloads[&edge_key(&"D0", &"Y")];
        assert_eq!(p.len(), 2, "two pathways");
        let interiors: Vec<BTreeSet<&str>> = p
            .iter()
            .map(|e| {
                let gr = e.graph();
                gr.nodes.iter().copied().filter(|n| !["X", "A0", "D0", "Y"].contains(n)).collect()
            })
            .collect();
        assert_eq!(interiors, vec![BTreeSet::from(["E0"]), BTreeSet::from(["B1", "C2", "E1"])]);
        assert!(p.iter().all(|e| matches!(e, Encapsulated::Leaf(_))));
        // direct edges carry nothing
        assert!(!payloads.contains_key(&edge_key(&"X", &"A0")));
    }

    #[test]
    fn identical_networks_stay_as_they_are() {
        let a = two_networks()[0].clone();
        assert_eq!(construct_encapsulated_an(&[a.clone(), a.clone()]), a);
        assert_eq!(encapsulate_behavior(&[a.clone(), a.clone()], Caps::default()).unwrap(), Encapsulated::Leaf(a));
    }

    #[test]
    fn rerelation_examples() {
        let mut c = g(&[("a", "b"), ("b", "c")]);
        remove_with_rerelation(&mut c, "a", "b", &BTreeSet::new());
        assert_eq!(c.edges, BTreeSet::from([("b", "c")]));
        let mut d = g(&[("r", "a"), ("a", "b"), ("b", "c"), ("b", "d")]);
        remove_with_rerelation(&mut d, "a", "b", &BTreeSet::new());
        assert_eq!(d.edges, BTreeSet::from([("r", "a"), ("b", "c"), ("b", "d"), ("r", "c"), ("r", "d")]));
    }

    #[test]
    fn connecting_subnetwork_includes_upstream_branch() {
        let n = g(&[("s", "m"), ("m", "t"), ("p", "m"), ("q", "p"), ("s", "t"), ("u", "s")]);
        let sub = get_connecting_subnetwork(&n, "s", "t", 100).unwrap();
        assert_eq!(sub.nodes, BTreeSet::from(["s", "m", "t", "p", "q", "u"]));
        let chain = g(&[("a", "b"), ("b", "c")]);
        assert_eq!(get_connecting_subnetwork(&chain, "a", "c", 100).unwrap(), chain);
        assert!(get_connecting_subnetwork(&chain, "c", "a", 100).unwrap().nodes.is_empty());
    }

    #[test]
    fn path_cap_is_enforced() {
        // ladder with 2^12 paths
        let mut l = Graph::default();
        for i in 0..12u32 {
            l.add_edge(2 * i, 2 * i + 2);
            l.add_edge(2 * i, 2 * i + 1);
            l.add_edge(2 * i + 1, 2 * i + 2);
        }
        assert_eq!(l.simple_path_nodes(0, 24, 100), Err(EncapsulationError::TooManyPaths { cap: 100 }));
        assert_eq!(l.simple_path_nodes(0, 24, 5000).unwrap().len(), 25);
    }

    #[test]
    fn split_counts() {
        let is_c = |n: &&str| n.starts_with('C');
        // one DSV-like node with two conditioners
        let one = g(&[("x", "C1"), ("y", "C2"), ("C1", "T"), ("C2", "T")]);
        let s = split_alternatives(&one, &["T"], is_c, 100).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].nodes, BTreeSet::from(["x", "C1", "T"]));
        assert_eq!(s[1].nodes, BTreeSet::from(["y", "C2", "T"]));
        // no alternatives
        let chain = g(&[("x", "C1"), ("C1", "T")]);
        assert_eq!(split_alternatives(&chain, &["T"], is_c, 100).unwrap(), vec![chain.clone()]);
        // two independent binary choices
        let two = g(&[
            ("C1", "T1"),
            ("C2", "T1"),
            ("C3", "T2"),
            ("C4", "T2"),
            ("T1", "G"),
            ("T2", "G"),
            ("a", "C1"),
            ("b", "C2"),
            ("c", "C3"),
            ("d", "C4"),
        ]);
        let s = split_alternatives(&two, &["G"], is_c, 100).unwrap();
        assert_eq!(s.len(), 4);
        let chosen: BTreeSet<Vec<&str>> =
            s.iter().map(|n| n.nodes.iter().copied().filter(|x| is_c(x)).collect()).collect();
        let oracle: BTreeSet<Vec<&str>> =
            [["C1", "C3"], ["C1", "C4"], ["C2", "C3"], ["C2", "C4"]].iter().map(|v| v.to_vec()).collect();
        assert_eq!(chosen, oracle);
        assert_eq!(split_alternatives(&two, &["G"], is_c, 3), Err(EncapsulationError::TooManyAlternatives { cap: 3 }));
    }

    #[test]
    fn nested_choice_only_when_reached() {
        let is_c = |n: &&str| n.starts_with('C');
        // C2's own conditioners matter only when C2 is picked
        let n = g(&[("C1", "T"), ("C2", "T"), ("C3", "C2"), ("C4", "C2"), ("x", "C1"), ("y", "C3"), ("z", "C4")]);
        assert_eq!(split_alternatives(&n, &["T"], is_c, 100).unwrap().len(), 3);
    }

    #[test]
    fn transitive_grouping() {
        let s = |v: &[u8]| v.iter().copied().collect::<BTreeSet<u8>>();
        let groups = group_by_shared_nodes(&[s(&[1, 2]), s(&[3]), s(&[2, 4]), s(&[4, 5]), s(&[6])]);
        assert_eq!(groups, vec![vec![0, 2, 3], vec![1], vec![4]]);
    }

    fn dag(n: u8, bits: &[bool]) -> Graph<u8> {
        let mut g = Graph::default();
        let mut k = 0;
        for a in 0..n {
            g.nodes.insert(a);
            for b in a + 1..n {
                if bits[k] {
                    g.add_edge(a, b);
                }
                k += 1;
            }
        }
        g
    }

    fn reach_oracle(g: &Graph<u8>, a: u8, b: u8) -> bool {
        // transitive closure by repeated squaring of the edge set
        let mut r: BTreeSet<(u8, u8)> = g.edges.clone();
        loop {
            let extra: Vec<(u8, u8)> = r
                .iter()
                .flat_map(|&(x, y)| r.iter().filter(move |e| e.0 == y).map(move |e| (x, e.1)))
                .filter(|e| !r.contains(e))
                .collect();
            if extra.is_empty() {
                break;
            }
            r.extend(extra);
        }
        r.contains(&(a, b))
    }

    fn paths_oracle(g: &Graph<u8>, a: u8, b: u8) -> BTreeSet<u8> {
        fn go(g: &Graph<u8>, cur: u8, b: u8, path: &mut Vec<u8>, out: &mut BTreeSet<u8>) {
            if cur == b && path.len() > 1 {
                out.extend(path.iter().copied());
                return;
            }
            for s in g.succs(cur) {
                if !path.contains(&s) {
                    path.push(s);
                    go(g, s, b, path, out);
                    path.pop();
                }
            }
        }
        let mut out = BTreeSet::new();
        go(g, a, b, &mut vec![a], &mut out);
        out
    }

    proptest! {
        #[test]
        fn ean_edges_are_paths_everywhere(b1 in proptest::collection::vec(any::<bool>(), 10), b2 in proptest::collection::vec(any::<bool>(), 10)) {
            let nets = [dag(5, &b1), dag(5, &b2)];
            let ean = construct_encapsulated_an(&nets);
            for &(x, y) in &ean.edges {
                for n in &nets {
                    prop_assert!(reach_oracle(n, x, y));
                }
            }
            // fixpoint
            prop_assert_eq!(construct_encapsulated_an(&[ean.clone(), nets[1].clone()]), ean.clone());
            // any pair with a path in both keeps a path in the skeleton when both ends survive
            for &x in &ean.nodes {
                for &y in &ean.nodes {
                    if x != y && nets.iter().all(|n| n.edges.contains(&(x, y))) {
                        prop_assert!(ean.has_path(x, y));
                    }
                }
            }
        }

        #[test]
        fn simple_paths_match_oracle(bits in proptest::collection::vec(any::<bool>(), 15), a in 0u8..6, b in 0u8..6) {
            prop_assume!(a != b);
            let g = dag(6, &bits);
            prop_assert_eq!(g.simple_path_nodes(a, b, 10_000).unwrap(), paths_oracle(&g, a, b));
            let sub = get_connecting_subnetwork(&g, a, b, 10_000).unwrap();
            let mut expect = paths_oracle(&g, a, b);
            for &n in &expect.clone() {
                if n != a && n != b {
                    expect.extend(g.ancestors(n));
                }
            }
            prop_assert_eq!(sub.nodes, expect);
        }

        #[test]
        fn rerelation_keeps_reachability(bits in proptest::collection::vec(any::<bool>(), 15), pick in 0usize..15) {
            let g0 = dag(6, &bits);
            let edges: Vec<(u8, u8)> = g0.edges.iter().copied().collect();
            prop_assume!(!edges.is_empty());
            let (n0, n1) = edges[pick % edges.len()];
            let mut g1 = g0.clone();
            remove_with_rerelation(&mut g1, n0, n1, &BTreeSet::new());
            for u in 0..6u8 {
                for v in 0..6u8 {
                    if u != n0 && v != n1 && reach_oracle(&g0, u, v) {
                        prop_assert!(reach_oracle(&g1, u, v), "{u}->{v} lost removing {n0}->{n1}");
                    }
                }
            }
        }

        #[test]
        fn encapsulation_is_sound(sets in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 15), 2..4)) {
            let nets: Vec<Graph<u8>> = sets.iter().map(|b| dag(6, b)).collect();
            let enc = encapsulate_behavior(&nets, Caps::default()).unwrap();
            check_sound(&enc, &nets)?;
        }
    }

    fn check_sound(enc: &Encapsulated<u8>, nets: &[Graph<u8>]) -> Result<(), TestCaseError> {
        if let Encapsulated::Ean { graph, payloads } = enc {
            for &(x, y) in &graph.edges {
                for n in nets {
                    prop_assert!(reach_oracle(n, x, y));
                }
            }
            // every payload level is made of sub-networks of the inputs
            for groups in payloads.values() {
                for g in groups {
                    for (_, level) in g.levels() {
                        for e in &level.edges {
                            prop_assert!(nets.iter().any(|n| n.edges.contains(e)) || reach_oracle_any(nets, *e));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn reach_oracle_any(nets: &[Graph<u8>], e: (u8, u8)) -> bool {
        nets.iter().any(|n| reach_oracle(n, e.0, e.1))
    }
}
