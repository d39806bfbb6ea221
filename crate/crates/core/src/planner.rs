//! Backward-chaining planner over a learned model.
//!
//! Sets of BSVs that appear together as sources or as co-predicted events
//! are grouped into GSVs first. The action network (AN) is then grown
//! upstream from each goal until it reaches nodes that hold right now.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::IteratorRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sv::{DsvKind, Model, SvId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TargetEffect {
    A,
    D,
    One,
    Zero,
}

impl TargetEffect {
    /// What must hold before the effect can happen.
    pub fn precondition(self) -> TargetEffect {
        match self {
            TargetEffect::A => TargetEffect::Zero,
            TargetEffect::D => TargetEffect::One,
            TargetEffect::One => TargetEffect::A,
            TargetEffect::Zero => TargetEffect::D,
        }
    }

    pub fn is_event(self) -> bool {
        matches!(self, TargetEffect::A | TargetEffect::D)
    }

    fn of_dsv(kind: DsvKind) -> TargetEffect {
        match kind {
            DsvKind::Activation => TargetEffect::A,
            DsvKind::Deactivation => TargetEffect::D,
        }
    }

    fn dsv_kind(self) -> Option<DsvKind> {
        match self {
            TargetEffect::A => Some(DsvKind::Activation),
            TargetEffect::D => Some(DsvKind::Deactivation),
            _ => None,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            TargetEffect::A => "A",
            TargetEffect::D => "D",
            TargetEffect::One => "1",
            TargetEffect::Zero => "0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSv {
    pub id: usize,
    pub constituents: BTreeSet<SvId>,
}

/// GSVs of one model revision.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Groups {
    pub revision: u64,
    pub gsvs: Vec<GroupSv>,
    by_set: BTreeMap<BTreeSet<SvId>, usize>,
    /// BSV -> GSVs it belongs to
    constituency: BTreeMap<SvId, BTreeSet<usize>>,
}

impl Groups {
    pub fn get(&self, set: &BTreeSet<SvId>) -> Option<usize> {
        self.by_set.get(set).copied()
    }

    pub fn constituencies(&self, bsv: SvId) -> impl Iterator<Item = usize> + '_ {
        self.constituency.get(&bsv).into_iter().flat_map(|s| s.iter().copied())
    }

    fn add(&mut self, set: BTreeSet<SvId>) {
        if set.len() < 2 || self.by_set.contains_key(&set) {
            return;
        }
        let id = self.gsvs.len();
        for &b in &set {
            self.constituency.entry(b).or_default().insert(id);
        }
        self.by_set.insert(set.clone(), id);
        self.gsvs.push(GroupSv { id, constituents: set });
    }
}

fn state_bsvs(model: &Model, set: &BTreeSet<SvId>) -> BTreeSet<SvId> {
    set.iter().copied().filter(|&s| model.bsv(s).is_some_and(|b| !b.is_action)).collect()
}

fn predicted_owners(model: &Model, targets: &BTreeSet<SvId>, kind: DsvKind) -> BTreeSet<SvId> {
    targets.iter().filter_map(|&t| model.dsv(t)).filter(|d| d.kind == kind).map(|d| d.owner).collect()
}

/// Groups positive sources, negative sources and co-predicted events of
/// every CSV. Action BSVs never join a group.
pub fn build_group_svs(model: &Model) -> Groups {
    let mut g = Groups { revision: model.revision(), ..Groups::default() };
    for c in model.csvs() {
        g.add(state_bsvs(model, &c.pos));
        g.add(state_bsvs(model, &c.neg));
        g.add(predicted_owners(model, &c.targets, DsvKind::Activation));
        g.add(predicted_owners(model, &c.targets, DsvKind::Deactivation));
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    Bsv(SvId, TargetEffect),
    Group(usize, TargetEffect),
    Csv(SvId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionNetwork {
    pub goals: Vec<Node>,
    pub nodes: BTreeSet<Node>,
    /// (predecessor, successor)
    pub edges: BTreeSet<(Node, Node)>,
    /// satisfied by the current states
    pub roots: BTreeSet<Node>,
    /// action BSVs, kept as unexpanded leaves
    pub actions: BTreeSet<Node>,
    pub dead: BTreeSet<Node>,
}

impl ActionNetwork {
    pub fn predecessors(&self, n: Node) -> impl Iterator<Item = Node> + '_ {
        self.edges.iter().filter(move |e| e.1 == n).map(|e| e.0)
    }

    pub fn successors(&self, n: Node) -> impl Iterator<Item = Node> + '_ {
        self.edges.range((n, Node::Bsv(SvId(0), TargetEffect::A))..).take_while(move |e| e.0 == n).map(|e| e.1)
    }

    pub fn is_alive(&self, n: Node) -> bool {
        self.nodes.contains(&n) && !self.dead.contains(&n)
    }

    pub fn goals_alive(&self) -> bool {
        self.goals.iter().all(|&g| self.is_alive(g))
    }

    pub fn csvs(&self) -> impl Iterator<Item = SvId> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Csv(c) => Some(*c),
            _ => None,
        })
    }

    /// A node is alive when a root or action leaf reaches it.
    fn mark_dead(&mut self) {
        let mut alive: BTreeSet<Node> = self.roots.union(&self.actions).copied().collect();
        let mut queue: VecDeque<Node> = alive.iter().copied().collect();
        while let Some(n) = queue.pop_front() {
            let next: Vec<Node> = self.successors(n).collect();
            for s in next {
                if alive.insert(s) {
                    queue.push_back(s);
                }
            }
        }
        self.dead = self.nodes.difference(&alive).copied().collect();
    }

    pub fn to_dot(&self, model: &Model, groups: &Groups) -> String {
        let mut s = String::from("digraph an {\n");
        for &n in &self.nodes {
            let style = if self.roots.contains(&n) {
                ", style=filled, fillcolor=lightgreen"
            } else if self.dead.contains(&n) {
                ", style=dashed, color=gray"
            } else if self.goals.contains(&n) {
                ", shape=doublecircle"
            } else {
                ""
            };
            let _ = writeln!(s, "  \"{}\" [label=\"{}\"{style}];", node_key(n), node_label(model, groups, n));
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(s, "  \"{}\" -> \"{}\";", node_key(a), node_key(b));
        }
        s.push_str("}\n");
        s
    }
}

pub fn node_key(n: Node) -> String {
    match n {
        Node::Bsv(b, e) => format!("b{}{}", b.0, e.symbol()),
        Node::Group(g, e) => format!("g{g}{}", e.symbol()),
        Node::Csv(c) => format!("c{}", c.0),
    }
}

pub fn node_label(model: &Model, groups: &Groups, n: Node) -> String {
    match n {
        Node::Bsv(b, e) => format!("{}({})", model.label(b), e.symbol()),
        Node::Group(g, e) => {
            let names: Vec<String> = groups.gsvs[g].constituents.iter().map(|&b| model.label(b)).collect();
            format!("G{g}[{}]({})", names.join(","), e.symbol())
        }
        Node::Csv(c) => model.label(c),
    }
}

/// Goal node for a BSV, or for the event a DSV stands for.
pub fn goal_node(model: &Model, sv: SvId, effect: TargetEffect) -> Node {
    if let Some(d) = model.dsv(sv) {
        Node::Bsv(d.owner, TargetEffect::of_dsv(d.kind))
    } else if model.csv(sv).is_some() {
        Node::Csv(sv)
    } else {
        Node::Bsv(sv, effect)
    }
}

fn holds(active: bool, e: TargetEffect) -> bool {
    match e {
        TargetEffect::One | TargetEffect::A => active,
        TargetEffect::Zero | TargetEffect::D => !active,
    }
}

pub fn satisfied_by_current(model: &Model, groups: &Groups, n: Node) -> bool {
    match n {
        Node::Bsv(b, e) => !model.bsv(b).is_some_and(|b| b.is_action) && holds(model.active_now(b), e),
        Node::Group(g, e) => groups.gsvs[g].constituents.iter().all(|&b| holds(model.active_now(b), e)),
        Node::Csv(c) => model
            .csv(c)
            .is_some_and(|c| c.pos.iter().all(|&s| model.active_now(s)) && !c.neg.iter().any(|&s| model.active_now(s))),
    }
}

fn is_action(model: &Model, n: Node) -> bool {
    matches!(n, Node::Bsv(b, _) if model.bsv(b).is_some_and(|b| b.is_action))
}

/// Nodes whose effect is needed for `n`, in the fixed order of the case analysis.
pub fn pathways(model: &Model, groups: &Groups, n: Node) -> Vec<Node> {
    let mut out = Vec::new();
    match n {
        Node::Bsv(b, e) => {
            out.push(Node::Bsv(b, e.precondition()));
            out.extend(groups.constituencies(b).map(|g| Node::Group(g, e)));
            if let Some(kind) = e.dsv_kind() {
                if let Some(d) = model.dsv_of(b, kind) {
                    out.extend(model.conditioners_of(d).map(Node::Csv));
                }
            }
        }
        Node::Group(g, e) => {
            let members = &groups.gsvs[g].constituents;
            out.push(Node::Group(g, e.precondition()));
            out.extend(members.iter().map(|&b| Node::Bsv(b, e)));
            // strict supersets
            let supers: BTreeSet<usize> = members
                .iter()
                .flat_map(|&b| groups.constituencies(b))
                .filter(|&h| h != g && members.is_subset(&groups.gsvs[h].constituents))
                .collect();
            out.extend(supers.into_iter().map(|h| Node::Group(h, e)));
            if let Some(kind) = e.dsv_kind() {
                let dsvs: Option<BTreeSet<SvId>> = members.iter().map(|&b| model.dsv_of(b, kind)).collect();
                if let Some(dsvs) = dsvs {
                    let first = *dsvs.iter().next().expect("groups have members");
                    out.extend(
                        model
                            .conditioners_of(first)
                            .filter(|&c| dsvs.is_subset(&model.csv(c).unwrap().targets))
                            .map(Node::Csv),
                    );
                }
            }
        }
        Node::Csv(c) => {
            let Some(csv) = model.csv(c) else { return out };
            let pos_b = state_bsvs(model, &csv.pos);
            match groups.get(&pos_b) {
                Some(g) => out.push(Node::Group(g, TargetEffect::One)),
                None => out.extend(pos_b.iter().map(|&b| Node::Bsv(b, TargetEffect::One))),
            }
            let neg_b = state_bsvs(model, &csv.neg);
            match groups.get(&neg_b) {
                Some(g) => out.push(Node::Group(g, TargetEffect::Zero)),
                None => out.extend(neg_b.iter().map(|&b| Node::Bsv(b, TargetEffect::Zero))),
            }
            for &s in &csv.pos {
                if let Some(b) = model.bsv(s) {
                    if b.is_action {
                        out.push(Node::Bsv(s, TargetEffect::One));
                    }
                } else if let Some(d) = model.dsv(s) {
                    out.push(Node::Bsv(d.owner, TargetEffect::of_dsv(d.kind)));
                }
            }
            for &s in &csv.neg {
                if let Some(d) = model.dsv(s) {
                    let e = match d.kind {
                        DsvKind::Activation => TargetEffect::Zero,
                        DsvKind::Deactivation => TargetEffect::One,
                    };
                    out.push(Node::Bsv(d.owner, e));
                }
            }
            out.extend(model.conditioners_of(c).map(Node::Csv));
        }
    }
    out
}

/// Grows `net` upstream from `(start)`. Returns false when the node is dead.
pub fn generate_upstream_an(model: &Model, groups: &Groups, start: Node, net: &mut ActionNetwork) -> bool {
    let mut stack = vec![start];
    let mut fresh = false;
    while let Some(n) = stack.pop() {
        if !net.nodes.insert(n) {
            continue;
        }
        fresh = true;
        if is_action(model, n) {
            net.actions.insert(n);
            continue;
        }
        if satisfied_by_current(model, groups, n) {
            net.roots.insert(n);
            continue;
        }
        for p in pathways(model, groups, n) {
            net.edges.insert((p, n));
            if !net.nodes.contains(&p) {
                stack.push(p);
            }
        }
    }
    if fresh {
        net.mark_dead();
    }
    net.is_alive(start)
}

/// Caches GSVs between planning calls until the model changes.
#[derive(Debug, Clone, Default)]
pub struct Planner {
    groups: Option<Groups>,
}

impl Planner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn groups(&mut self, model: &Model) -> &Groups {
        if self.groups.as_ref().is_none_or(|g| g.revision != model.revision()) {
            self.groups = Some(build_group_svs(model));
        }
        self.groups.as_ref().unwrap()
    }

    pub fn plan(&mut self, model: &Model, goals: &[Node]) -> ActionNetwork {
        let groups = self.groups(model);
        let mut net = ActionNetwork { goals: goals.to_vec(), ..ActionNetwork::default() };
        for &g in goals {
            generate_upstream_an(model, groups, g, &mut net);
        }
        net
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionChoice {
    Planned(SvId),
    Random(SvId),
}

impl ActionChoice {
    pub fn action(self) -> SvId {
        match self {
            ActionChoice::Planned(a) | ActionChoice::Random(a) => a,
        }
    }
}

#[derive(Debug, Default)]
struct Requirement {
    action: Option<SvId>,
    forbidden: BTreeSet<SvId>,
}

/// What one step of `c` and its downstream CSVs needs from the next action,
/// or `None` when some non-action source is not actualized.
fn requirement(model: &Model, c: SvId, seen: &mut BTreeSet<SvId>) -> Option<Requirement> {
    if !seen.insert(c) {
        return None;
    }
    let csv = model.csv(c)?;
    let mut req = Requirement::default();
    for &s in &csv.pos {
        if model.bsv(s).is_some_and(|b| b.is_action) {
            if req.action.replace(s).is_some_and(|a| a != s) {
                return None;
            }
        } else if !model.active_now(s) {
            return None;
        }
    }
    for &s in &csv.neg {
        if model.bsv(s).is_some_and(|b| b.is_action) {
            req.forbidden.insert(s);
        } else if model.active_now(s) {
            return None;
        }
    }
    for &t in &csv.targets {
        if model.csv(t).is_none() {
            continue;
        }
        let down = requirement(model, t, seen)?;
        match (req.action, down.action) {
            (Some(a), Some(b)) if a != b => return None,
            (None, Some(b)) => req.action = Some(b),
            _ => {}
        }
        req.forbidden.extend(down.forbidden);
    }
    if req.action.is_some_and(|a| req.forbidden.contains(&a)) {
        return None;
    }
    Some(req)
}

/// Actions that would immediately fire some CSV of the network. A CSV
/// with conditioners is only entered through one of them.
pub fn candidate_actions(model: &Model, net: &ActionNetwork) -> BTreeSet<SvId> {
    net.csvs()
        .filter(|&c| model.conditioners_of(c).next().is_none())
        .filter_map(|c| requirement(model, c, &mut BTreeSet::new()).and_then(|r| r.action))
        .collect()
}

/// Uniform over candidate actions, else uniform over `all_actions`.
pub fn select_action(model: &Model, net: &ActionNetwork, all_actions: &[SvId], rng: &mut impl Rng) -> ActionChoice {
    if net.goals_alive() {
        if let Some(a) = candidate_actions(model, net).into_iter().choose(rng) {
            return ActionChoice::Planned(a);
        }
    }
    let i = rng.gen_range(0..all_actions.len());
    ActionChoice::Random(all_actions[i])
}
