//! Satisfaction, mismatch and refinement of a source SPN by a refiner.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::spn::{NodeId, Observed, Spn, SpnError};

/// Partial map from source node ids to refiner node ids.
pub type Assignment = BTreeMap<NodeId, NodeId>;

fn image(obs: &Observed, f: &Assignment, n: NodeId) -> Option<usize> {
    f.get(&n).and_then(|o| obs.index.get(o)).copied()
}

fn edge_present(obs: &Observed, f: &Assignment, k: usize, a: NodeId, b: NodeId) -> bool {
    match (image(obs, f, a), image(obs, f, b)) {
        (Some(i), Some(j)) => obs.reach(k, i, j),
        _ => false,
    }
}

/// Unmapped source nodes plus source edges whose image has no path.
pub fn mismatch_score(src: &Spn, obs: &Observed, f: &Assignment) -> Result<usize, SpnError> {
    src.same_keys(&obs.spn)?;
    let mut n = src.nodes.keys().filter(|id| image(obs, f, **id).is_none()).count();
    for (k, es) in src.edges.iter().enumerate() {
        n += es.iter().filter(|&&(a, b)| !edge_present(obs, f, k, a, b)).count();
    }
    Ok(n)
}

pub fn is_satisfied_by(src: &Spn, obs: &Observed, f: &Assignment) -> Result<bool, SpnError> {
    Ok(mismatch_score(src, obs, f)? == 0)
}

/// Times an element was met by a refinement and times it was missing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presence {
    pub seen: u32,
    pub absent: u32,
}

impl Presence {
    pub fn absence_ratio(&self) -> f64 {
        if self.seen == 0 {
            0.0
        } else {
            self.absent as f64 / self.seen as f64
        }
    }
}

fn edge_key(a: NodeId, b: NodeId) -> u64 {
    (a as u64) << 32 | b as u64
}

/// A source SPN with per-element presence counters and averaged positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracked {
    pub spn: Spn,
    pub nodes: BTreeMap<NodeId, Presence>,
    /// per key, packed (from, to)
    pub edges: Vec<BTreeMap<u64, Presence>>,
    /// observations averaged into each node position
    pub pos_weight: BTreeMap<NodeId, u32>,
}

impl Tracked {
    /// Genesis from an observation, which counts as the first sighting.
    pub fn new(spn: Spn) -> Tracked {
        let one = Presence { seen: 1, absent: 0 };
        let nodes = spn.nodes.keys().map(|&n| (n, one)).collect();
        let edges = spn.edges.iter().map(|es| es.iter().map(|&(a, b)| (edge_key(a, b), one)).collect()).collect();
        let pos_weight = spn.nodes.keys().map(|&n| (n, 1)).collect();
        Tracked { spn, nodes, edges, pos_weight }
    }

    pub fn edge_presence(&self, k: usize, a: NodeId, b: NodeId) -> Option<Presence> {
        self.edges[k].get(&edge_key(a, b)).copied()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RefineReport {
    pub removed_nodes: Vec<NodeId>,
    pub removed_edges: Vec<(usize, NodeId, NodeId)>,
    pub added_edges: Vec<(usize, NodeId, NodeId)>,
    /// absent elements kept because their absence ratio is still low
    pub kept_absent: usize,
}

impl RefineReport {
    pub fn changed(&self) -> bool {
        !(self.removed_nodes.is_empty() && self.removed_edges.is_empty() && self.added_edges.is_empty())
    }
}

/// Refinement that removes an element only once its absence ratio exceeds
/// `t_ref`. With `t_ref == 0` every absence removes.
pub fn statistical_refine_by(
    t: &mut Tracked,
    obs: &Observed,
    f: &Assignment,
    t_ref: f64,
) -> Result<RefineReport, SpnError> {
    t.spn.same_keys(&obs.spn)?;
    let nk = t.spn.keys.len();
    let mut banned: Vec<BTreeSet<(NodeId, NodeId)>> = vec![BTreeSet::new(); nk];
    let mut report = RefineReport::default();

    let ids: Vec<NodeId> = t.spn.nodes.keys().copied().collect();
    for n in ids {
        let p = t.nodes.entry(n).or_default();
        p.seen += 1;
        if let Some(i) = image(obs, f, n) {
            let w = t.pos_weight.entry(n).or_insert(1);
            let node = t.spn.nodes.get_mut(&n).unwrap();
            for d in 0..2 {
                node.pos[d] = (node.pos[d] * *w as f64 + obs.pos[i][d]) / (*w as f64 + 1.0);
            }
            *w += 1;
            continue;
        }
        p.absent += 1;
        if p.absence_ratio() > t_ref {
            for (k, a, b) in t.spn.remove_node_with_rerelation(n, &banned) {
                t.edges[k].insert(edge_key(a, b), Presence::default());
                report.added_edges.push((k, a, b));
            }
            t.nodes.remove(&n);
            t.pos_weight.remove(&n);
            report.removed_nodes.push(n);
        } else {
            report.kept_absent += 1;
        }
    }

    let mut work: VecDeque<(usize, NodeId, NodeId)> =
        (0..nk).flat_map(|k| t.spn.edges[k].iter().map(move |&(a, b)| (k, a, b))).collect();
    let mut checked = BTreeSet::new();
    while let Some((k, a, b)) = work.pop_front() {
        if !t.spn.edges[k].contains(&(a, b)) || !checked.insert((k, a, b)) {
            continue;
        }
        let p = t.edges[k].entry(edge_key(a, b)).or_default();
        p.seen += 1;
        if edge_present(obs, f, k, a, b) {
            continue;
        }
        p.absent += 1;
        if p.absence_ratio() > t_ref {
            banned[k].insert((a, b));
            report.removed_edges.push((k, a, b));
            for (p, s) in t.spn.remove_edge_with_rerelation(k, a, b, &banned[k]) {
                t.edges[k].insert(edge_key(p, s), Presence::default());
                report.added_edges.push((k, p, s));
                work.push_back((k, p, s));
            }
        } else {
            report.kept_absent += 1;
        }
    }
    for (k, m) in t.edges.iter_mut().enumerate() {
        let es = &t.spn.edges[k];
        m.retain(|&key, _| es.contains(&((key >> 32) as NodeId, key as NodeId)));
    }
    Ok(report)
}

/// Plain refinement: every missing node and path goes.
pub fn refine_by(src: &Spn, obs: &Observed, f: &Assignment) -> Result<(Spn, RefineReport), SpnError> {
    let mut t = Tracked::new(src.clone());
    let r = statistical_refine_by(&mut t, obs, f, 0.0)?;
    Ok((t.spn, r))
}
