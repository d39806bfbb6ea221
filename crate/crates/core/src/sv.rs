//! State variables and the model graph that holds them.
//!
//! Three kinds live in one id space: base variables (BSVs) fed from outside,
//! dynamics variables (DSVs) that detect BSV events, and conditioning
//! variables (CSVs) that relate sources to targets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::learning::LearningConfig;
use crate::significance::RelationStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SvId(pub u32);

impl fmt::Display for SvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SvState {
    Active,
    Inactive,
    Unobserved,
}

impl SvState {
    pub fn from_bool(active: bool) -> Self {
        if active {
            SvState::Active
        } else {
            SvState::Inactive
        }
    }

    pub fn is_active(self) -> bool {
        self == SvState::Active
    }
}

/// Ordered so that `max` gives the later value in the only legal sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Flag {
    Unconditional,
    Conditional,
    PossiblyConditional,
}

impl Flag {
    /// Moves forward to `to` if it is later; never moves back.
    pub fn raise(&mut self, to: Flag) {
        if to > *self {
            *self = to;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DsvKind {
    Activation,
    Deactivation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvKind {
    Base,
    Dynamics,
    Conditioning,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseSv {
    pub id: SvId,
    pub label: String,
    pub is_action: bool,
    pub state: bool,
    pub prev: bool,
    /// (activation, deactivation); `None` for action BSVs.
    pub dsvs: Option<(SvId, SvId)>,
    pub last_event: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsSv {
    pub id: SvId,
    pub label: String,
    pub owner: SvId,
    pub kind: DsvKind,
    /// Event state of this step. This is what conditioners predict.
    pub state: SvState,
    /// Whether the DSV reads as active when used as a source, which
    /// includes persistence after the event step.
    pub source_active: bool,
    pub prev_source_active: bool,
    pub flag: Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningSv {
    pub id: SvId,
    pub pos: BTreeSet<SvId>,
    pub neg: BTreeSet<SvId>,
    pub targets: BTreeSet<SvId>,
    pub neg_formed: bool,
    pub flag: Flag,
    pub state: SvState,
    pub stats: BTreeMap<SvId, RelationStats>,
}

impl ConditioningSv {
    pub fn sources(&self) -> impl Iterator<Item = SvId> + '_ {
        self.pos.iter().chain(self.neg.iter()).copied()
    }
}

/// True iff every positive source is active and no negative source is active.
pub fn sources_satisfied(csv: &ConditioningSv, prev_active: impl Fn(SvId) -> bool) -> bool {
    csv.pos.iter().all(|&s| prev_active(s)) && !csv.neg.iter().any(|&s| prev_active(s))
}

/// Activation/deactivation event state from one BSV transition.
pub fn dsv_event(kind: DsvKind, prev: bool, curr: bool) -> SvState {
    match (kind, prev, curr) {
        (DsvKind::Activation, false, true) => SvState::Active,
        (DsvKind::Activation, false, false) => SvState::Inactive,
        (DsvKind::Activation, true, _) => SvState::Unobserved,
        (DsvKind::Deactivation, true, false) => SvState::Active,
        (DsvKind::Deactivation, true, true) => SvState::Inactive,
        (DsvKind::Deactivation, false, _) => SvState::Unobserved,
    }
}

/// How long an active DSV keeps reading as active when used as a source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Persistence {
    /// Until the next step with any BSV event anywhere in the model.
    #[default]
    ModelWide,
    /// Until the owner BSV's next event.
    PerOwner,
    /// Only on the event step itself.
    None,
}

impl Persistence {
    pub fn persists(self, owner_event: bool, any_event: bool) -> bool {
        match self {
            Persistence::ModelWide => !any_event,
            Persistence::PerOwner => !owner_event,
            Persistence::None => false,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown state variable {0}")]
    UnknownSv(SvId),
    #[error("observation is missing base variable {0}")]
    MissingObservation(SvId),
    #[error("conditioning cycle through {0}")]
    Cycle(SvId),
    #[error("negative sources of {0} already formed")]
    NegativesAlreadyFormed(SvId),
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// BSV values for one step. Action BSVs report the action taken in the
/// previous step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Observation(pub BTreeMap<SvId, bool>);

impl Observation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, id: SvId, active: bool) -> &mut Self {
        self.0.insert(id, active);
        self
    }

    pub fn get(&self, id: SvId) -> Option<bool> {
        self.0.get(&id).copied()
    }
}

impl FromIterator<(SvId, bool)> for Observation {
    fn from_iter<I: IntoIterator<Item = (SvId, bool)>>(iter: I) -> Self {
        Observation(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub(crate) bsvs: BTreeMap<SvId, BaseSv>,
    pub(crate) dsvs: BTreeMap<SvId, DynamicsSv>,
    pub(crate) csvs: BTreeMap<SvId, ConditioningSv>,
    /// target -> CSVs conditioning it
    pub(crate) conditioners: BTreeMap<SvId, BTreeSet<SvId>>,
    pub(crate) next_id: u32,
    pub(crate) revision: u64,
    pub(crate) step: u64,
    pub(crate) initialized: bool,
    /// BSVs and DSVs that were active at the previous step, read as sources.
    pub(crate) prev_active: BTreeSet<SvId>,
    pub config: LearningConfig,
}

impl Default for Model {
    fn default() -> Self {
        Model::new(LearningConfig::default())
    }
}

impl Model {
    pub fn new(config: LearningConfig) -> Self {
        Model {
            bsvs: BTreeMap::new(),
            dsvs: BTreeMap::new(),
            csvs: BTreeMap::new(),
            conditioners: BTreeMap::new(),
            next_id: 0,
            revision: 0,
            step: 0,
            initialized: false,
            prev_active: BTreeSet::new(),
            config,
        }
    }

    fn fresh_id(&mut self) -> SvId {
        let id = SvId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Registers a BSV. Non-action BSVs get their two DSVs, labelled
    /// `<label>-A` and `<label>-D`.
    pub fn add_bsv(&mut self, label: &str, is_action: bool) -> SvId {
        let id = self.fresh_id();
        let dsvs = if is_action {
            None
        } else {
            let a = self.fresh_id();
            let d = self.fresh_id();
            for (dsv, kind, suffix) in [(a, DsvKind::Activation, "A"), (d, DsvKind::Deactivation, "D")] {
                self.dsvs.insert(
                    dsv,
                    DynamicsSv {
                        id: dsv,
                        label: format!("{label}-{suffix}"),
                        owner: id,
                        kind,
                        state: SvState::Unobserved,
                        source_active: false,
                        prev_source_active: false,
                        // must start conditional: unconditional SVs are never unexplained
                        flag: Flag::Conditional,
                    },
                );
            }
            Some((a, d))
        };
        self.bsvs.insert(
            id,
            BaseSv { id, label: label.to_string(), is_action, state: false, prev: false, dsvs, last_event: None },
        );
        self.revision += 1;
        id
    }

    pub fn kind(&self, id: SvId) -> Option<SvKind> {
        if self.bsvs.contains_key(&id) {
            Some(SvKind::Base)
        } else if self.dsvs.contains_key(&id) {
            Some(SvKind::Dynamics)
        } else if self.csvs.contains_key(&id) {
            Some(SvKind::Conditioning)
        } else {
            None
        }
    }

    pub fn bsv(&self, id: SvId) -> Option<&BaseSv> {
        self.bsvs.get(&id)
    }

    pub fn dsv(&self, id: SvId) -> Option<&DynamicsSv> {
        self.dsvs.get(&id)
    }

    pub fn csv(&self, id: SvId) -> Option<&ConditioningSv> {
        self.csvs.get(&id)
    }

    pub fn bsvs(&self) -> impl Iterator<Item = &BaseSv> {
        self.bsvs.values()
    }

    pub fn dsvs(&self) -> impl Iterator<Item = &DynamicsSv> {
        self.dsvs.values()
    }

    pub fn csvs(&self) -> impl Iterator<Item = &ConditioningSv> {
        self.csvs.values()
    }

    pub fn csv_count(&self) -> usize {
        self.csvs.len()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// The next observation does not follow from the last one (the
    /// environment was moved by hand). It is taken as a first observation:
    /// no DSV events, nothing learned from the jump.
    pub fn break_continuity(&mut self) {
        self.initialized = false;
    }

    pub fn bsv_by_label(&self, label: &str) -> Option<SvId> {
        self.bsvs.values().find(|b| b.label == label).map(|b| b.id)
    }

    /// The activation or deactivation DSV of a BSV.
    pub fn dsv_of(&self, bsv: SvId, kind: DsvKind) -> Option<SvId> {
        let (a, d) = self.bsvs.get(&bsv)?.dsvs?;
        Some(if kind == DsvKind::Activation { a } else { d })
    }

    pub fn label(&self, id: SvId) -> String {
        if let Some(b) = self.bsvs.get(&id) {
            b.label.clone()
        } else if let Some(d) = self.dsvs.get(&id) {
            d.label.clone()
        } else if self.csvs.contains_key(&id) {
            format!("C{}", id.0)
        } else {
            format!("?{}", id.0)
        }
    }

    /// State of any SV at the current step.
    pub fn state(&self, id: SvId) -> SvState {
        if let Some(b) = self.bsvs.get(&id) {
            SvState::from_bool(b.state)
        } else if let Some(d) = self.dsvs.get(&id) {
            d.state
        } else if let Some(c) = self.csvs.get(&id) {
            c.state
        } else {
            SvState::Unobserved
        }
    }

    /// Whether a BSV/DSV read as active in the previous step (source view).
    pub fn prev_active(&self, id: SvId) -> bool {
        self.prev_active.contains(&id)
    }

    pub fn prev_active_set(&self) -> &BTreeSet<SvId> {
        &self.prev_active
    }

    /// Whether a BSV/DSV reads as active right now, i.e. as it will be read
    /// as a source at the next step.
    pub fn active_now(&self, id: SvId) -> bool {
        if let Some(b) = self.bsvs.get(&id) {
            b.state
        } else if let Some(d) = self.dsvs.get(&id) {
            d.source_active
        } else {
            self.csvs.get(&id).is_some_and(|c| c.state.is_active())
        }
    }

    pub fn flag(&self, id: SvId) -> Option<Flag> {
        if let Some(d) = self.dsvs.get(&id) {
            Some(d.flag)
        } else {
            self.csvs.get(&id).map(|c| c.flag)
        }
    }

    pub(crate) fn raise_flag(&mut self, id: SvId, to: Flag) {
        if let Some(d) = self.dsvs.get_mut(&id) {
            d.flag.raise(to);
        } else if let Some(c) = self.csvs.get_mut(&id) {
            c.flag.raise(to);
        }
    }

    /// CSVs that condition `target`.
    pub fn conditioners_of(&self, target: SvId) -> impl Iterator<Item = SvId> + '_ {
        self.conditioners.get(&target).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn has_active_conditioner(&self, target: SvId) -> bool {
        self.conditioners_of(target).any(|c| self.csvs[&c].state.is_active())
    }

    pub fn sources_satisfied_prev(&self, csv: SvId) -> bool {
        self.csvs.get(&csv).is_some_and(|c| sources_satisfied(c, |s| self.prev_active(s)))
    }

    /// CSV layers: layer 0 targets only DSVs, layer k has a target in layer k-1.
    /// Traversal order for learning is layer 0 first.
    pub fn computation_levels(&self) -> Result<Vec<Vec<SvId>>, ModelError> {
        let mut level: BTreeMap<SvId, usize> = BTreeMap::new();
        let mut on_stack: BTreeSet<SvId> = BTreeSet::new();
        for &id in self.csvs.keys() {
            self.level_of(id, &mut level, &mut on_stack)?;
        }
        let mut layers: Vec<Vec<SvId>> = Vec::new();
        for (id, l) in level {
            if layers.len() <= l {
                layers.resize(l + 1, Vec::new());
            }
            layers[l].push(id);
        }
        Ok(layers)
    }

    fn level_of(
        &self,
        id: SvId,
        level: &mut BTreeMap<SvId, usize>,
        on_stack: &mut BTreeSet<SvId>,
    ) -> Result<usize, ModelError> {
        if let Some(&l) = level.get(&id) {
            return Ok(l);
        }
        if !on_stack.insert(id) {
            return Err(ModelError::Cycle(id));
        }
        let mut l = 0;
        for &t in &self.csvs[&id].targets {
            if self.csvs.contains_key(&t) {
                l = l.max(self.level_of(t, level, on_stack)? + 1);
            }
        }
        on_stack.remove(&id);
        level.insert(id, l);
        Ok(l)
    }

    /// Sources of every SV strictly downstream of `id`, plus owners of the
    /// DSVs reached.
    pub fn trivial_sources(&self, id: SvId) -> BTreeSet<SvId> {
        let mut out = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut stack: Vec<SvId> = match self.csvs.get(&id) {
            Some(c) => c.targets.iter().copied().collect(),
            None => Vec::new(),
        };
        while let Some(y) = stack.pop() {
            if !seen.insert(y) {
                continue;
            }
            if let Some(c) = self.csvs.get(&y) {
                out.extend(c.sources());
                stack.extend(c.targets.iter().copied());
            } else if let Some(d) = self.dsvs.get(&y) {
                out.insert(d.owner);
            }
        }
        out
    }

    /// Trivial sources seen by a new conditioner of `target`.
    pub fn trivial_for_new_conditioner(&self, target: SvId) -> BTreeSet<SvId> {
        let mut out = self.trivial_sources(target);
        if let Some(c) = self.csvs.get(&target) {
            out.extend(c.sources());
        } else if let Some(d) = self.dsvs.get(&target) {
            out.insert(d.owner);
        }
        out
    }

    /// Positive sources of `id` and of every CSV upstream of it.
    pub fn upstream_positive_sources(&self, id: SvId) -> BTreeSet<SvId> {
        let mut out = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            if !seen.insert(c) {
                continue;
            }
            if let Some(csv) = self.csvs.get(&c) {
                out.extend(csv.pos.iter().copied());
            }
            stack.extend(self.conditioners_of(c));
        }
        out
    }

    pub(crate) fn insert_csv(&mut self, csv: ConditioningSv) {
        for &t in &csv.targets {
            self.conditioners.entry(t).or_default().insert(csv.id);
        }
        self.csvs.insert(csv.id, csv);
        self.revision += 1;
    }

    pub(crate) fn new_csv_id(&mut self) -> SvId {
        self.fresh_id()
    }

    pub(crate) fn add_target(&mut self, csv: SvId, target: SvId, stats: RelationStats) {
        let c = self.csvs.get_mut(&csv).expect("csv exists");
        if c.targets.insert(target) {
            c.stats.insert(target, stats);
            self.conditioners.entry(target).or_default().insert(csv);
            self.revision += 1;
        }
    }

    pub(crate) fn remove_target(&mut self, csv: SvId, target: SvId) {
        let c = self.csvs.get_mut(&csv).expect("csv exists");
        if c.targets.remove(&target) {
            c.stats.remove(&target);
            if let Some(set) = self.conditioners.get_mut(&target) {
                set.remove(&csv);
                if set.is_empty() {
                    self.conditioners.remove(&target);
                }
            }
            self.revision += 1;
        }
    }

    /// Removes a CSV and every edge touching it.
    pub(crate) fn remove_csv(&mut self, id: SvId) {
        let Some(c) = self.csvs.remove(&id) else { return };
        for t in c.targets {
            if let Some(set) = self.conditioners.get_mut(&t) {
                set.remove(&id);
                if set.is_empty() {
                    self.conditioners.remove(&t);
                }
            }
        }
        if let Some(ups) = self.conditioners.remove(&id) {
            for u in ups {
                if let Some(k) = self.csvs.get_mut(&u) {
                    k.targets.remove(&id);
                    k.stats.remove(&id);
                }
            }
        }
        self.revision += 1;
    }

    /// Adds a hand-built CSV. Meant for fixtures and model editing; learning
    /// creates CSVs itself.
    pub fn add_csv(
        &mut self,
        pos: impl IntoIterator<Item = SvId>,
        neg: impl IntoIterator<Item = SvId>,
        targets: impl IntoIterator<Item = SvId>,
    ) -> Result<SvId, ModelError> {
        let id = self.fresh_id();
        let pos: BTreeSet<SvId> = pos.into_iter().collect();
        let neg: BTreeSet<SvId> = neg.into_iter().collect();
        let targets: BTreeSet<SvId> = targets.into_iter().collect();
        for &s in pos.iter().chain(neg.iter()) {
            if !self.bsvs.contains_key(&s) && !self.dsvs.contains_key(&s) {
                return Err(ModelError::UnknownSv(s));
            }
        }
        for &t in &targets {
            if !self.dsvs.contains_key(&t) && !self.csvs.contains_key(&t) {
                return Err(ModelError::UnknownSv(t));
            }
        }
        let neg_formed = !neg.is_empty();
        let stats = targets.iter().map(|&t| (t, RelationStats::default())).collect();
        self.insert_csv(ConditioningSv {
            id,
            pos,
            neg,
            targets,
            neg_formed,
            flag: Flag::Unconditional,
            state: SvState::Unobserved,
            stats,
        });
        Ok(id)
    }

    /// Sets a CSV's flag directly. Fixture helper; the flag only moves forward.
    pub fn set_flag(&mut self, id: SvId, flag: Flag) {
        self.raise_flag(id, flag);
    }
}
