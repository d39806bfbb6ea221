//! Instance recording and replay, used to check that a CSV modification
//! leaves its responses to past instances unchanged.
//!
//! Recording is off unless an [`InstanceLog`] is driven alongside the model.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::learning::{instance_state, StepReport};
use crate::sv::{ConditioningSv, Model, SvId, SvState};

/// Previous-step source values and current-step target states seen by one CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub sources: BTreeMap<SvId, bool>,
    pub targets: BTreeMap<SvId, SvState>,
}

impl Instance {
    pub fn capture(model: &Model, csv: &ConditioningSv) -> Instance {
        Instance {
            sources: csv.sources().map(|s| (s, model.prev_active(s))).collect(),
            targets: csv.targets.iter().map(|&t| (t, model.state(t))).collect(),
        }
    }
}

/// State of `csv` in response to `instance`, computed without mutation.
/// Targets missing from the instance are ignored.
pub fn replay_instance(csv: &ConditioningSv, instance: &Instance) -> SvState {
    let on = |s: &SvId| instance.sources.get(s).copied().unwrap_or(false);
    let satisfied = csv.pos.iter().all(on) && !csv.neg.iter().any(on);
    let targets: Vec<SvState> = csv.targets.iter().filter_map(|t| instance.targets.get(t).copied()).collect();
    instance_state(satisfied, &targets)
}

#[derive(Debug, Clone)]
struct Recorded {
    step: u64,
    instance: Instance,
    /// composition right after the recording step
    pos: BTreeSet<SvId>,
    neg: BTreeSet<SvId>,
    targets: BTreeSet<SvId>,
}

impl Recorded {
    fn reference(&self) -> SvState {
        let on = |s: &SvId| self.instance.sources.get(s).copied().unwrap_or(false);
        let satisfied = self.pos.iter().all(on) && !self.neg.iter().any(on);
        let targets: Vec<SvState> = self.targets.iter().filter_map(|t| self.instance.targets.get(t).copied()).collect();
        instance_state(satisfied, &targets)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub csv: SvId,
    pub step: u64,
    pub recorded_at: u64,
    pub expected: SvState,
    pub replayed: SvState,
    pub instance: Instance,
    pub cause: ViolationCause,
}

/// Why a replayed state moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationCause {
    /// Recorded with some but not all positive sources active and an inactive
    /// target; refinement later removed the inactive positives.
    PartialPositive,
    /// Recorded with an active negative source explaining inactivity; every
    /// such negative was later removed on an activation.
    NegativesEmptied,
    Other,
}

#[derive(Debug, Default)]
pub struct InstanceLog {
    records: BTreeMap<SvId, Vec<Recorded>>,
    pub checked: u64,
}

impl InstanceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Call after every `process_environment_step`. Replays the history of
    /// every modified CSV, then records this step's instances.
    pub fn observe(&mut self, model: &Model, report: &StepReport) -> Vec<Violation> {
        for &(orig, copy) in &report.duplications {
            if let Some(recs) = self.records.get(&orig).cloned() {
                self.records.insert(copy, recs);
            }
        }
        for id in &report.negatives_formed {
            self.records.remove(id);
        }
        self.records.retain(|id, _| model.csv(*id).is_some());
        // duplicated CSVs answer for their own target subsets
        let lineage: BTreeSet<SvId> = report.duplications.iter().flat_map(|&(a, b)| [a, b]).collect();
        for (id, recs) in self.records.iter_mut() {
            let targets = &model.csv(*id).unwrap().targets;
            if lineage.contains(id) {
                for r in recs.iter_mut() {
                    if targets.is_subset(&r.targets) {
                        r.targets = targets.clone();
                    }
                }
            }
            recs.retain(|r| &r.targets == targets);
        }

        let mut violations = Vec::new();
        let touched: BTreeSet<SvId> = report.refined.keys().copied().chain(lineage).collect();
        for id in touched {
            let Some(csv) = model.csv(id) else { continue };
            let Some(recs) = self.records.get_mut(&id) else { continue };
            recs.retain(|r| {
                let expected = r.reference();
                let replayed = replay_instance(csv, &r.instance);
                self.checked += 1;
                if expected != replayed {
                    let on = |s: &SvId| r.instance.sources.get(s) == Some(&true);
                    let n_on = r.pos.iter().filter(|s| on(s)).count();
                    let cause = if n_on > 0 && n_on < r.pos.len() {
                        ViolationCause::PartialPositive
                    } else if n_on == r.pos.len() && r.neg.iter().any(on) && !csv.neg.iter().any(on) {
                        ViolationCause::NegativesEmptied
                    } else {
                        ViolationCause::Other
                    };
                    violations.push(Violation {
                        cause,
                        csv: id,
                        step: report.step,
                        recorded_at: r.step,
                        expected,
                        replayed,
                        instance: r.instance.clone(),
                    });
                    false
                } else {
                    true
                }
            });
        }

        for csv in model.csvs() {
            // with no positive source active the replay stays unobserved forever
            if !csv.pos.iter().any(|&s| model.prev_active(s)) {
                continue;
            }
            self.records.entry(csv.id).or_default().push(Recorded {
                step: report.step,
                instance: Instance::capture(model, csv),
                pos: csv.pos.clone(),
                neg: csv.neg.clone(),
                targets: csv.targets.clone(),
            });
        }
        violations
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sv::{DsvKind, Flag};

    #[test]
    fn replay_after_refinement_keeps_active() {
        let mut m = Model::default();
        let x0 = m.add_bsv("X0", false);
        let x1 = m.add_bsv("X1", false);
        let y = m.add_bsv("Y", false);
        let ya = m.dsv_of(y, DsvKind::Activation).unwrap();
        let c = m.add_csv([x0], [], [ya]).unwrap();
        let inst = Instance {
            sources: BTreeMap::from([(x0, true), (x1, true)]),
            targets: BTreeMap::from([(ya, SvState::Active)]),
        };
        assert_eq!(replay_instance(m.csv(c).unwrap(), &inst), SvState::Active);
        m.set_flag(c, Flag::Conditional);
        let inst0 = Instance { sources: BTreeMap::from([(x0, false)]), targets: inst.targets.clone() };
        assert_eq!(replay_instance(m.csv(c).unwrap(), &inst0), SvState::Unobserved);
    }
}
