//! The network-refinement learner.
//!
//! Every CSV has one target: a class label or another CSV. Upstream CSVs
//! are subvariants of their target and inherit its assignment through a
//! node link. Negative conditioners are separate CSVs whose target event is
//! the suppression of the CSV they condition.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assign::search;
use crate::refine::{is_satisfied_by, statistical_refine_by, Assignment, Tracked};
use crate::spn::{NodeId, Observed, Spn, SpnError};

pub type ClassId = u16;
pub type CsvId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MnrConfig {
    /// assignments drawn per search, for learning and prediction
    pub population: usize,
    pub t_ref: f64,
    pub eps_sign: f64,
    /// deepest conditioning chain allowed to form
    pub max_depth: u32,
}

impl Default for MnrConfig {
    fn default() -> Self {
        MnrConfig { population: 10, t_ref: 0.05, eps_sign: 0.05, max_depth: 12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    Class(ClassId),
    Csv(CsvId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TState {
    Active,
    Inactive,
    Unobserved,
}

impl TState {
    fn flipped(self) -> TState {
        match self {
            TState::Active => TState::Inactive,
            TState::Inactive => TState::Active,
            TState::Unobserved => TState::Unobserved,
        }
    }
}

/// Counts over steps where the target was observed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub observed: u64,
    pub incidence: u64,
    pub satisfied: u64,
    pub concurrence: u64,
}

impl Counts {
    /// P(incidence | sources satisfied)
    pub fn p_incidence_given_ss(&self) -> f64 {
        if self.satisfied == 0 {
            0.0
        } else {
            self.concurrence as f64 / self.satisfied as f64
        }
    }

    /// P(sources satisfied | incidence)
    pub fn p_ss_given_incidence(&self) -> f64 {
        if self.incidence == 0 {
            1.0
        } else {
            self.concurrence as f64 / self.incidence as f64
        }
    }

    fn record(&mut self, target: TState, ss: bool) {
        if target == TState::Unobserved {
            return;
        }
        self.observed += 1;
        let inc = target == TState::Active;
        self.incidence += inc as u64;
        self.satisfied += ss as u64;
        self.concurrence += (inc && ss) as u64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnrCsv {
    pub id: CsvId,
    pub target: Target,
    pub polarity: Polarity,
    pub depth: u32,
    pub source: Tracked,
    /// own node -> node of the target CSV it was assigned to at genesis
    pub link: BTreeMap<NodeId, NodeId>,
    /// cleared on the first inactive observation
    pub unconditional: bool,
    pub counts: Counts,
    pub positive: BTreeSet<CsvId>,
    pub negative: BTreeSet<CsvId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MnrModel {
    pub config: MnrConfig,
    pub classes: BTreeSet<ClassId>,
    pub csvs: BTreeMap<CsvId, MnrCsv>,
    /// class -> depth-0 conditioners
    pub roots: BTreeMap<ClassId, BTreeSet<CsvId>>,
    next_id: CsvId,
    pub steps: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LearnReport {
    pub created: Vec<CsvId>,
    pub refined: Vec<CsvId>,
    pub removed: Vec<CsvId>,
}

impl MnrModel {
    pub fn new(config: MnrConfig) -> Self {
        MnrModel { config, ..Default::default() }
    }

    pub fn csv(&self, id: CsvId) -> Option<&MnrCsv> {
        self.csvs.get(&id)
    }

    pub fn len(&self) -> usize {
        self.csvs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.csvs.is_empty()
    }

    fn create(
        &mut self,
        target: Target,
        polarity: Polarity,
        depth: u32,
        obs: &Observed,
        link: BTreeMap<NodeId, NodeId>,
    ) -> CsvId {
        let id = self.next_id;
        self.next_id += 1;
        let mut counts = Counts::default();
        // created from a step where the target event happened and the copy is satisfied
        counts.record(TState::Active, true);
        self.csvs.insert(
            id,
            MnrCsv {
                id,
                target,
                polarity,
                depth,
                source: Tracked::new(obs.spn.clone()),
                link,
                unconditional: true,
                counts,
                positive: BTreeSet::new(),
                negative: BTreeSet::new(),
            },
        );
        match target {
            Target::Class(c) => {
                self.roots.entry(c).or_default().insert(id);
            }
            Target::Csv(t) => {
                let parent = self.csvs.get_mut(&t).unwrap();
                match polarity {
                    Polarity::Positive => parent.positive.insert(id),
                    Polarity::Negative => parent.negative.insert(id),
                };
            }
        }
        id
    }

    /// Assignment pairs inherited from the target CSV's assignment.
    fn inherited(&self, id: CsvId, parent_f: &Assignment) -> Assignment {
        let c = &self.csvs[&id];
        c.link
            .iter()
            .filter(|(own, _)| c.source.spn.nodes.contains_key(own))
            .filter_map(|(&own, up)| parent_f.get(up).map(|&o| (own, o)))
            .collect()
    }

    fn find(
        &self,
        id: CsvId,
        obs: &Observed,
        parent_f: &Assignment,
        rng: &mut impl Rng,
    ) -> Result<(Assignment, usize), SpnError> {
        let fixed = self.inherited(id, parent_f);
        search(&self.csvs[&id].source.spn, obs, &fixed, self.config.population, rng)
    }

    /// One labelled observation. Every known class is observed: the label
    /// as active, the others as inactive.
    pub fn learn(&mut self, obs: &Observed, label: ClassId, rng: &mut impl Rng) -> Result<LearnReport, SpnError> {
        self.steps += 1;
        self.classes.insert(label);
        let mut report = LearnReport::default();
        for c in self.classes.clone() {
            let ts = if c == label { TState::Active } else { TState::Inactive };
            let mut explained = false;
            for id in self.roots.get(&c).cloned().unwrap_or_default() {
                if self.adapt(id, ts, obs, &Assignment::new(), rng, &mut report)? == TState::Active {
                    explained = true;
                }
            }
            if ts == TState::Active && !explained && !obs.is_empty() {
                report.created.push(self.create(Target::Class(c), Polarity::Positive, 0, obs, BTreeMap::new()));
            }
        }
        report.removed = self.filter_insignificant();
        Ok(report)
    }

    fn adapt(
        &mut self,
        id: CsvId,
        ts: TState,
        obs: &Observed,
        parent_f: &Assignment,
        rng: &mut impl Rng,
        report: &mut LearnReport,
    ) -> Result<TState, SpnError> {
        if ts == TState::Unobserved || !self.csvs.contains_key(&id) {
            return Ok(TState::Unobserved);
        }
        let (f, score) = self.find(id, obs, parent_f, rng)?;
        let t_ref = self.config.t_ref;
        let c = self.csvs.get_mut(&id).unwrap();
        let (state, ss) = if f.is_empty() {
            (TState::Unobserved, false)
        } else {
            match ts {
                TState::Active => {
                    let r = statistical_refine_by(&mut c.source, obs, &f, t_ref)?;
                    if r.changed() {
                        report.refined.push(id);
                    }
                    (TState::Active, is_satisfied_by(&c.source.spn, obs, &f)?)
                }
                _ if score == 0 => {
                    c.unconditional = false;
                    (TState::Inactive, true)
                }
                _ => (TState::Unobserved, false),
            }
        };
        c.counts.record(ts, ss);
        if state == TState::Unobserved {
            return Ok(state);
        }
        let f: Assignment = f.into_iter().filter(|(n, _)| c.source.spn.nodes.contains_key(n)).collect();
        let (pos, neg, depth, unconditional) = (c.positive.clone(), c.negative.clone(), c.depth, c.unconditional);
        let mut pos_active = false;
        for u in pos {
            pos_active |= self.adapt(u, state, obs, &f, rng, report)? == TState::Active;
        }
        let mut neg_active = false;
        for n in neg {
            neg_active |= self.adapt(n, state.flipped(), obs, &f, rng, report)? == TState::Active;
        }
        if depth < self.config.max_depth {
            let link: BTreeMap<NodeId, NodeId> = f.iter().map(|(&own, &o)| (o, own)).collect();
            if state == TState::Active && !unconditional && !pos_active {
                report.created.push(self.create(Target::Csv(id), Polarity::Positive, depth + 1, obs, link));
            } else if state == TState::Inactive && !neg_active {
                report.created.push(self.create(Target::Csv(id), Polarity::Negative, depth + 1, obs, link));
            }
        }
        Ok(state)
    }

    /// Drops conditioners whose sources are rarely satisfied when their
    /// target event happens, together with everything upstream of them.
    fn filter_insignificant(&mut self) -> Vec<CsvId> {
        let eps = self.config.eps_sign;
        let weak: Vec<CsvId> =
            self.csvs.values().filter(|c| c.counts.p_ss_given_incidence() < eps).map(|c| c.id).collect();
        let mut removed = Vec::new();
        for id in weak {
            self.remove_tree(id, &mut removed);
        }
        removed
    }

    fn remove_tree(&mut self, id: CsvId, removed: &mut Vec<CsvId>) {
        let Some(c) = self.csvs.remove(&id) else { return };
        removed.push(id);
        match c.target {
            Target::Class(k) => {
                if let Some(r) = self.roots.get_mut(&k) {
                    r.remove(&id);
                }
            }
            Target::Csv(t) => {
                if let Some(p) = self.csvs.get_mut(&t) {
                    p.positive.remove(&id);
                    p.negative.remove(&id);
                }
            }
        }
        for u in c.positive.iter().chain(c.negative.iter()) {
            self.remove_tree(*u, removed);
        }
    }

    /// Activation probability of a satisfied CSV, `None` when no
    /// assignment in the population satisfies it.
    fn csv_probability(
        &self,
        id: CsvId,
        obs: &Observed,
        parent_f: &Assignment,
        rng: &mut impl Rng,
    ) -> Result<Option<f64>, SpnError> {
        let (f, score) = self.find(id, obs, parent_f, rng)?;
        if score != 0 {
            return Ok(None);
        }
        let c = &self.csvs[&id];
        let own = c.counts.p_incidence_given_ss();
        if c.positive.is_empty() && c.negative.is_empty() {
            return Ok(Some(own));
        }
        let mut p_pos: Option<f64> = None;
        for &u in &c.positive {
            if let Some(p) = self.csv_probability(u, obs, &f, rng)? {
                p_pos = Some(p_pos.map_or(p, |q| q.max(p)));
            }
        }
        let mut p_neg: Option<f64> = None;
        for &n in &c.negative {
            if let Some(p) = self.csv_probability(n, obs, &f, rng)? {
                p_neg = Some(p_neg.map_or(p, |q| q.max(p)));
            }
        }
        Ok(Some(combine(own, p_pos, p_neg)))
    }

    /// Per known class, the highest probability over its satisfied
    /// depth-0 conditioners (0 when none is satisfied).
    pub fn predict(&self, obs: &Observed, rng: &mut impl Rng) -> Result<BTreeMap<ClassId, f64>, SpnError> {
        let mut out = BTreeMap::new();
        for &c in &self.classes {
            let mut best = 0.0f64;
            for &id in self.roots.get(&c).into_iter().flatten() {
                if let Some(p) = self.csv_probability(id, obs, &Assignment::new(), rng)? {
                    best = best.max(p);
                }
            }
            out.insert(c, best);
        }
        Ok(out)
    }

    /// Highest-probability class, lowest id on ties, `None` when every
    /// probability is zero.
    pub fn classify(&self, obs: &Observed, rng: &mut impl Rng) -> Result<Option<ClassId>, SpnError> {
        Ok(argmax(&self.predict(obs, rng)?))
    }

    /// Source SPNs of the conditioners of class `c`, by depth.
    pub fn class_spns(&self, c: ClassId) -> Vec<(CsvId, u32, &Spn)> {
        let mut out = Vec::new();
        let mut stack: Vec<CsvId> = self.roots.get(&c).into_iter().flatten().copied().collect();
        while let Some(id) = stack.pop() {
            let x = &self.csvs[&id];
            out.push((id, x.depth, &x.source.spn));
            stack.extend(x.positive.iter().chain(x.negative.iter()));
        }
        out.sort_by_key(|e| (e.1, e.0));
        out
    }
}

/// p = (1 - p_neg) * p_pos with the CSV's own rate standing in when no
/// positive conditioner is satisfied.
pub fn combine(own: f64, p_pos: Option<f64>, p_neg: Option<f64>) -> f64 {
    (1.0 - p_neg.unwrap_or(0.0)) * p_pos.unwrap_or(own)
}

pub fn argmax(probs: &BTreeMap<ClassId, f64>) -> Option<ClassId> {
    let mut best: Option<(ClassId, f64)> = None;
    for (&c, &p) in probs {
        if p > 0.0 && best.map_or(true, |b| p > b.1) {
            best = Some((c, p));
        }
    }
    best.map(|b| b.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(points: &[(u16, f64, f64)], edges: &[(u32, u32)]) -> Observed {
        let mut s = Spn::new(["h"]);
        for (i, &(t, x, y)) in points.iter().enumerate() {
            s.add_node(i as NodeId, t, [x, y]);
        }
        for &(a, b) in edges {
            s.add_edge(0, a, b);
        }
        Observed::new(s)
    }

    #[test]
    fn formula_arithmetic() {
        assert!((combine(0.3, Some(0.8), Some(0.5)) - 0.4).abs() < 1e-12);
        assert_eq!(combine(0.3, None, None), 0.3);
        let c = Counts { observed: 12, incidence: 10, satisfied: 10, concurrence: 9 };
        assert!((c.p_incidence_given_ss() - 0.9).abs() < 1e-12);
        assert_eq!(argmax(&BTreeMap::from([(2, 0.5), (1, 0.5), (3, 0.1)])), Some(1));
        assert_eq!(argmax(&BTreeMap::from([(2, 0.0)])), None);
    }

    #[test]
    fn genesis_copies_the_observation() {
        let mut m = MnrModel::new(MnrConfig::default());
        let o = shape(&[(0, 0.0, 0.0), (1, 5.0, 0.0)], &[(0, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = m.learn(&o, 4, &mut rng).unwrap();
        assert_eq!(r.created.len(), 1);
        let c = m.csv(r.created[0]).unwrap();
        assert_eq!(c.source.spn, o.spn);
        assert!(c.unconditional && c.target == Target::Class(4));
        assert_eq!(m.classify(&o, &mut rng).unwrap(), Some(4));
    }

    #[test]
    fn second_sample_refines_toward_shared_part() {
        let mut m = MnrModel::new(MnrConfig { t_ref: 0.0, ..Default::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = shape(&[(0, 0.0, 0.0), (1, 5.0, 0.0), (2, 9.0, 0.0)], &[(0, 1), (1, 2)]);
        let b = shape(&[(0, 0.0, 0.0), (1, 5.0, 0.0)], &[(0, 1)]);
        m.learn(&a, 1, &mut rng).unwrap();
        let r = m.learn(&b, 1, &mut rng).unwrap();
        assert!(r.created.is_empty());
        let c = m.csv(0).unwrap();
        assert_eq!(c.source.spn.nodes.len(), 2);
        assert_eq!(c.counts.satisfied, 2);
    }

    #[test]
    fn negative_conditioner_from_other_class() {
        let mut m = MnrModel::new(MnrConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let six = shape(&[(0, 0.0, 0.0), (1, 5.0, 0.0)], &[(0, 1)]);
        let four = shape(&[(0, 0.0, 0.0), (1, 5.0, 0.0), (2, 5.0, 5.0)], &[(0, 1), (1, 2)]);
        m.learn(&six, 6, &mut rng).unwrap();
        let r = m.learn(&four, 4, &mut rng).unwrap();
        // class 6's conditioner is satisfied by the 4: it turns conditional
        // and gains a negative conditioner initialised from the 4
        let c6 = m.csv(0).unwrap();
        assert!(!c6.unconditional);
        assert_eq!(c6.negative.len(), 1);
        let n = m.csv(*c6.negative.iter().next().unwrap()).unwrap();
        assert_eq!(n.source.spn, four.spn);
        assert_eq!(n.polarity, Polarity::Negative);
        assert!(r.created.contains(&n.id));
        // the 4 is now suppressed for class 6
        let p = m.predict(&four, &mut rng).unwrap();
        assert!(p[&4] > p[&6], "{p:?}");
        assert_eq!(m.classify(&six, &mut rng).unwrap(), Some(6));
    }

    #[test]
    fn prediction_is_repeatable_with_same_seed() {
        let mut m = MnrModel::new(MnrConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = shape(&[(0, 0.0, 0.0), (0, 2.0, 0.0), (1, 5.0, 0.0)], &[(0, 2), (1, 2)]);
        m.learn(&a, 0, &mut rng).unwrap();
        let p1 = m.predict(&a, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let p2 = m.predict(&a, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn empty_model_knows_nothing() {
        let m = MnrModel::new(MnrConfig::default());
        let o = shape(&[(0, 0.0, 0.0)], &[]);
        assert_eq!(m.classify(&o, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), None);
    }
}
