//! One learning step: DSV events, CSV adaptation in reverse computation
//! order, conditioner genesis for unexplained activity, and pruning.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::significance::{is_blocked, RelationStats};
use crate::sv::{
    dsv_event, sources_satisfied, ConditioningSv, Flag, Model, ModelError, Observation, Persistence, SvId, SvState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningConfig {
    pub persistence: Persistence,
    /// NCE cutoff; `None` disables blocking.
    pub eps_t: Option<f64>,
    /// Reset a CSV's counts whenever its sources change.
    pub reset_stats_on_change: bool,
    /// Whether the copy split off before negative formation keeps the counts.
    pub protected_copy_inherits_stats: bool,
    /// When false the model only computes states and never changes structure.
    pub learning_enabled: bool,
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig {
            persistence: Persistence::ModelWide,
            eps_t: None,
            reset_stats_on_change: false,
            protected_copy_inherits_stats: true,
            learning_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub states: BTreeMap<SvId, SvState>,
    pub created: Vec<SvId>,
    /// csv -> sources removed by refinement this step
    pub refined: BTreeMap<SvId, Vec<SvId>>,
    /// (original, copy)
    pub duplications: Vec<(SvId, SvId)>,
    pub negatives_formed: Vec<SvId>,
    /// Active, no active conditioner, flag not unconditional.
    pub unexplained: Vec<SvId>,
    /// Unexplained SVs the new CSV could not take.
    pub left_unexplained: Vec<SvId>,
    pub pruned: Vec<SvId>,
    /// (removed, survivor)
    pub merged: Vec<(SvId, SvId)>,
}

impl Model {
    /// Event states of all DSVs for one BSV transition. Pure.
    pub fn compute_dsv_states(
        &self,
        previous: &BTreeMap<SvId, bool>,
        current: &BTreeMap<SvId, bool>,
    ) -> Result<BTreeMap<SvId, SvState>, ModelError> {
        let mut out = BTreeMap::new();
        for d in self.dsvs.values() {
            let p = *previous.get(&d.owner).ok_or(ModelError::MissingObservation(d.owner))?;
            let c = *current.get(&d.owner).ok_or(ModelError::MissingObservation(d.owner))?;
            out.insert(d.id, dsv_event(d.kind, p, c));
        }
        for id in previous.keys().chain(current.keys()) {
            if !self.bsvs.contains_key(id) {
                return Err(ModelError::UnknownSv(*id));
            }
        }
        Ok(out)
    }

    pub fn process_environment_step(&mut self, obs: &Observation) -> Result<StepReport, ModelError> {
        for &id in obs.0.keys() {
            if !self.bsvs.contains_key(&id) {
                return Err(ModelError::UnknownSv(id));
            }
        }
        if let Some(&missing) = self.bsvs.keys().find(|id| !obs.0.contains_key(id)) {
            return Err(ModelError::MissingObservation(missing));
        }
        self.step += 1;
        let mut report = StepReport { step: self.step, ..Default::default() };

        if !self.initialized {
            for b in self.bsvs.values_mut() {
                let v = obs.0[&b.id];
                b.prev = v;
                b.state = !b.is_action && v;
            }
            for d in self.dsvs.values_mut() {
                d.state = SvState::Unobserved;
                d.source_active = false;
                d.prev_source_active = false;
            }
            self.initialized = true;
            self.refresh_prev_active();
            self.fill_states(&mut report);
            return Ok(report);
        }

        self.shift_and_observe(obs);

        for c in self.csvs.values_mut() {
            c.state = SvState::Unobserved;
        }
        let levels = self.computation_levels()?;
        let learn = self.config.learning_enabled;
        for layer in levels {
            for id in layer {
                if self.csvs.contains_key(&id) {
                    if learn {
                        self.compute_and_adapt_csv(id, &mut report)?;
                    } else {
                        let s = self.replay_state_now(id);
                        self.csvs.get_mut(&id).unwrap().state = s;
                    }
                }
            }
        }

        if learn {
            report.unexplained = self.collect_unexplained();
            let created = self.generate_explanatory_csv(&report.unexplained);
            let covered: BTreeSet<SvId> = match created {
                Some(id) => {
                    report.created.push(id);
                    self.csvs[&id].targets.clone()
                }
                None => BTreeSet::new(),
            };
            for &u in &report.unexplained {
                if !covered.contains(&u) {
                    self.raise_flag(u, Flag::PossiblyConditional);
                    report.left_unexplained.push(u);
                }
            }
            self.record_stats();
            self.model_refinement(&mut report);
        }
        self.fill_states(&mut report);
        Ok(report)
    }

    fn fill_states(&self, report: &mut StepReport) {
        report.states.clear();
        for b in self.bsvs.values() {
            report.states.insert(b.id, SvState::from_bool(b.state));
        }
        for d in self.dsvs.values() {
            report.states.insert(d.id, d.state);
        }
        for c in self.csvs.values() {
            report.states.insert(c.id, c.state);
        }
    }

    fn refresh_prev_active(&mut self) {
        self.prev_active.clear();
        for b in self.bsvs.values() {
            if b.prev {
                self.prev_active.insert(b.id);
            }
        }
        for d in self.dsvs.values() {
            if d.prev_source_active {
                self.prev_active.insert(d.id);
            }
        }
    }

    fn shift_and_observe(&mut self, obs: &Observation) {
        let mut any_event = false;
        for b in self.bsvs.values_mut() {
            let v = obs.0[&b.id];
            if b.is_action {
                b.prev = v;
                b.state = false;
            } else {
                b.prev = b.state;
                b.state = v;
                if b.prev != b.state {
                    any_event = true;
                    b.last_event = Some(self.step);
                }
            }
        }
        let persistence = self.config.persistence;
        for d in self.dsvs.values_mut() {
            let owner = &self.bsvs[&d.owner];
            d.prev_source_active = d.source_active;
            d.state = dsv_event(d.kind, owner.prev, owner.state);
            let owner_event = owner.prev != owner.state;
            d.source_active = d.state.is_active() || (d.source_active && persistence.persists(owner_event, any_event));
        }
        self.refresh_prev_active();
    }

    /// State of a CSV from the current observation without touching its
    /// composition.
    fn replay_state_now(&self, id: SvId) -> SvState {
        let c = &self.csvs[&id];
        let targets: Vec<SvState> = c.targets.iter().map(|&t| self.state(t)).collect();
        instance_state(sources_satisfied(c, |s| self.prev_active(s)), &targets)
    }

    /// Computes the CSV's state and adapts its composition to match.
    pub fn compute_and_adapt_csv(&mut self, id: SvId, report: &mut StepReport) -> Result<SvState, ModelError> {
        let (pos_any, all_pos, neg_any) = {
            let c = &self.csvs[&id];
            (
                c.pos.iter().any(|&s| self.prev_active(s)),
                c.pos.iter().all(|&s| self.prev_active(s)),
                c.neg.iter().any(|&s| self.prev_active(s)),
            )
        };
        if !pos_any {
            self.csvs.get_mut(&id).unwrap().state = SvState::Unobserved;
            return Ok(SvState::Unobserved);
        }
        let target_states: Vec<(SvId, SvState)> = self.csvs[&id].targets.iter().map(|&t| (t, self.state(t))).collect();
        let has_active = target_states.iter().any(|t| t.1 == SvState::Active);
        let has_inactive = target_states.iter().any(|t| t.1 == SvState::Inactive);

        if has_active && has_inactive {
            if let Some((_, copy)) = self.duplicate_csv_by_targets(id)? {
                report.duplications.push((id, copy));
                self.compute_and_adapt_csv(copy, report)?;
            }
        }

        let state = if has_active {
            let prev = &self.prev_active;
            let c = self.csvs.get_mut(&id).unwrap();
            let mut removed: Vec<SvId> = c.pos.iter().copied().filter(|s| !prev.contains(s)).collect();
            removed.extend(c.neg.iter().copied().filter(|s| prev.contains(s)));
            if !removed.is_empty() {
                c.pos.retain(|s| prev.contains(s));
                c.neg.retain(|s| !prev.contains(s));
                self.sources_changed(id);
                report.refined.entry(id).or_default().extend(removed);
            }
            SvState::Active
        } else if has_inactive {
            if !all_pos {
                SvState::Unobserved
            } else if neg_any {
                let prev = &self.prev_active;
                let c = self.csvs.get_mut(&id).unwrap();
                let removed: Vec<SvId> = c.neg.iter().copied().filter(|s| !prev.contains(s)).collect();
                if !removed.is_empty() {
                    c.neg.retain(|s| prev.contains(s));
                    self.sources_changed(id);
                    report.refined.entry(id).or_default().extend(removed);
                }
                SvState::Unobserved
            } else {
                if self.csvs[&id].neg_formed {
                    self.csvs.get_mut(&id).unwrap().flag.raise(Flag::Conditional);
                } else {
                    self.form_negative_connections(id, report)?;
                }
                SvState::Inactive
            }
        } else {
            SvState::Unobserved
        };
        self.csvs.get_mut(&id).unwrap().state = state;
        Ok(state)
    }

    fn sources_changed(&mut self, id: SvId) {
        self.revision += 1;
        if self.config.reset_stats_on_change {
            for s in self.csvs.get_mut(&id).unwrap().stats.values_mut() {
                *s = RelationStats::default();
            }
        }
    }

    /// Splits a CSV whose targets are both Active and Inactive this step.
    /// The original keeps Active targets, the copy takes Inactive ones, and
    /// Unobserved targets go to both. Returns `None` when there is nothing to
    /// split.
    pub fn duplicate_csv_by_targets(&mut self, id: SvId) -> Result<Option<(SvId, SvId)>, ModelError> {
        let c = self.csvs.get(&id).ok_or(ModelError::UnknownSv(id))?;
        let mut moved = BTreeSet::new();
        let mut shared = BTreeSet::new();
        let mut has_active = false;
        for &t in &c.targets {
            match self.state(t) {
                SvState::Active => has_active = true,
                SvState::Inactive => {
                    moved.insert(t);
                }
                SvState::Unobserved => {
                    shared.insert(t);
                }
            }
        }
        if !has_active || moved.is_empty() {
            return Ok(None);
        }
        let copy = self.split_off(id, &moved, &shared, true);
        Ok(Some((id, copy)))
    }

    /// Moves `moved` targets to a new copy of `id` that also gets `shared`.
    fn split_off(&mut self, id: SvId, moved: &BTreeSet<SvId>, shared: &BTreeSet<SvId>, inherit_stats: bool) -> SvId {
        let copy_id = self.new_csv_id();
        let orig = &self.csvs[&id];
        let targets: BTreeSet<SvId> = moved.union(shared).copied().collect();
        let stats = targets
            .iter()
            .map(|&t| {
                (
                    t,
                    if inherit_stats {
                        orig.stats.get(&t).copied().unwrap_or_default()
                    } else {
                        RelationStats::default()
                    },
                )
            })
            .collect();
        let copy = ConditioningSv {
            id: copy_id,
            pos: orig.pos.clone(),
            neg: orig.neg.clone(),
            targets,
            neg_formed: orig.neg_formed,
            flag: orig.flag,
            state: SvState::Unobserved,
            stats,
        };
        let ups: Vec<SvId> = self.conditioners_of(id).collect();
        self.insert_csv(copy);
        for &t in moved {
            self.remove_target(id, t);
        }
        for u in ups {
            let st = self.csvs[&u].stats.get(&id).copied().unwrap_or_default();
            self.add_target(u, copy_id, st);
        }
        copy_id
    }

    /// First inactive observation: protect unobserved targets in a copy,
    /// then take every active eligible BSV/DSV as a negative source.
    pub fn form_negative_connections(&mut self, id: SvId, report: &mut StepReport) -> Result<(), ModelError> {
        let c = self.csvs.get(&id).ok_or(ModelError::UnknownSv(id))?;
        if c.neg_formed {
            return Err(ModelError::NegativesAlreadyFormed(id));
        }
        let unobserved: BTreeSet<SvId> =
            c.targets.iter().copied().filter(|&t| self.state(t) == SvState::Unobserved).collect();
        if !unobserved.is_empty() && unobserved.len() < c.targets.len() {
            let inherit = self.config.protected_copy_inherits_stats;
            let copy = self.split_off(id, &unobserved, &BTreeSet::new(), inherit);
            report.duplications.push((id, copy));
        }
        let trivial = self.trivial_sources(id);
        let upstream = self.upstream_positive_sources(id);
        let neg: BTreeSet<SvId> =
            self.prev_active.iter().copied().filter(|s| !trivial.contains(s) && !upstream.contains(s)).collect();
        let c = self.csvs.get_mut(&id).unwrap();
        c.neg = neg;
        c.neg_formed = true;
        self.revision += 1;
        report.negatives_formed.push(id);
        Ok(())
    }

    fn collect_unexplained(&self) -> Vec<SvId> {
        let mut out = Vec::new();
        for d in self.dsvs.values() {
            if d.state.is_active() && d.flag != Flag::Unconditional && !self.has_active_conditioner(d.id) {
                out.push(d.id);
            }
        }
        for c in self.csvs.values() {
            if c.state.is_active() && c.flag != Flag::Unconditional && !self.has_active_conditioner(c.id) {
                out.push(c.id);
            }
        }
        out
    }

    /// Whether `id` may receive a new conditioner.
    pub fn target_eligible(&self, id: SvId) -> bool {
        if self.dsvs.contains_key(&id) {
            return true;
        }
        let Some(c) = self.csvs.get(&id) else { return false };
        if c.flag == Flag::Unconditional {
            return false;
        }
        match self.config.eps_t {
            Some(eps) => !is_blocked(c.stats.values(), eps),
            None => true,
        }
    }

    /// Forms one CSV over the active eligible sources and the eligible
    /// unexplained targets.
    pub fn generate_explanatory_csv(&mut self, unexplained: &[SvId]) -> Option<SvId> {
        let mut targets = BTreeSet::new();
        let mut pos = BTreeSet::new();
        for &t in unexplained {
            if !self.target_eligible(t) {
                continue;
            }
            let trivial = self.trivial_for_new_conditioner(t);
            let useful: Vec<SvId> = self.prev_active.iter().copied().filter(|s| !trivial.contains(s)).collect();
            if !useful.is_empty() {
                targets.insert(t);
                pos.extend(useful);
            }
        }
        if targets.is_empty() {
            return None;
        }
        let id = self.new_csv_id();
        let stats = targets.iter().map(|&t| (t, RelationStats::default())).collect();
        self.insert_csv(ConditioningSv {
            id,
            pos,
            neg: BTreeSet::new(),
            targets,
            neg_formed: false,
            flag: Flag::Unconditional,
            state: SvState::Active,
            stats,
        });
        Some(id)
    }

    fn record_stats(&mut self) {
        let mut updates: Vec<(SvId, SvId, bool, SvState)> = Vec::new();
        for c in self.csvs.values() {
            let ss = sources_satisfied(c, |s| self.prev_active.contains(&s));
            for &t in &c.targets {
                updates.push((c.id, t, ss, self.state(t)));
            }
        }
        for (c, t, ss, st) in updates {
            let stats = self.csvs.get_mut(&c).unwrap().stats.entry(t).or_default();
            stats.record(ss, st == SvState::Active, st != SvState::Unobserved);
        }
    }

    /// Removes empty CSVs and merges CSVs with equal composition, until
    /// nothing changes.
    pub fn model_refinement(&mut self, report: &mut StepReport) {
        loop {
            let mut changed = false;
            let empties: Vec<SvId> =
                self.csvs.values().filter(|c| c.pos.is_empty() || c.targets.is_empty()).map(|c| c.id).collect();
            for id in empties {
                self.remove_csv(id);
                report.pruned.push(id);
                changed = true;
            }
            type Key = (Vec<u32>, Vec<u32>, bool, Vec<u32>);
            let mut seen: BTreeMap<Key, SvId> = BTreeMap::new();
            let mut merges = Vec::new();
            for c in self.csvs.values() {
                let key = (
                    c.pos.iter().map(|s| s.0).collect(),
                    c.neg.iter().map(|s| s.0).collect(),
                    c.neg_formed,
                    c.targets.iter().map(|s| s.0).collect(),
                );
                match seen.get(&key) {
                    Some(&survivor) => merges.push((c.id, survivor)),
                    None => {
                        seen.insert(key, c.id);
                    }
                }
            }
            for (gone, survivor) in merges {
                if !self.csvs.contains_key(&gone) || !self.csvs.contains_key(&survivor) {
                    continue;
                }
                self.merge_into(gone, survivor);
                report.merged.push((gone, survivor));
                changed = true;
            }
            if !changed {
                break;
            }
        }
    }

    fn merge_into(&mut self, gone: SvId, survivor: SvId) {
        let g = self.csvs[&gone].clone();
        let ups: Vec<SvId> = self.conditioners_of(gone).collect();
        for u in ups {
            if u == survivor {
                continue;
            }
            let st = self.csvs[&u].stats.get(&gone).copied().unwrap_or_default();
            self.remove_target(u, gone);
            if !self.csvs[&u].targets.contains(&survivor) {
                self.add_target(u, survivor, st);
            }
        }
        self.remove_csv(gone);
        let s = self.csvs.get_mut(&survivor).unwrap();
        s.flag.raise(g.flag);
        if g.state.is_active() {
            s.state = SvState::Active;
        }
    }
}

/// State of a CSV instance from source satisfaction and target states: targets decide
/// only when sources are satisfied.
pub fn instance_state(satisfied: bool, targets: &[SvState]) -> SvState {
    if !satisfied {
        return SvState::Unobserved;
    }
    if targets.iter().any(|t| t.is_active()) {
        SvState::Active
    } else if targets.iter().any(|&t| t == SvState::Inactive) {
        SvState::Inactive
    } else {
        SvState::Unobserved
    }
}
