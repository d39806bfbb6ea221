//! Seeded random FSM-like observation streams for property tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sv::{Model, Observation, SvId};

#[derive(Debug, Clone)]
struct Rule {
    action: usize,
    /// (variable, required value)
    pre: Vec<(usize, bool)>,
    flips: Vec<usize>,
    prob: f64,
}

/// Boolean state variables driven by random actions through random
/// precondition/effect rules.
#[derive(Debug, Clone)]
pub struct FuzzStream {
    rng: ChaCha8Rng,
    rules: Vec<Rule>,
    state: Vec<bool>,
    n_actions: usize,
    last_action: Option<usize>,
    pub vars: Vec<SvId>,
    pub actions: Vec<SvId>,
}

impl FuzzStream {
    /// Registers `n_vars` state BSVs and `n_actions` action BSVs on `model`.
    pub fn new(model: &mut Model, n_vars: usize, n_actions: usize, n_rules: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vars = (0..n_vars).map(|i| model.add_bsv(&format!("V{i}"), false)).collect();
        let actions = (0..n_actions).map(|i| model.add_bsv(&format!("a{i}"), true)).collect();
        let rules = (0..n_rules)
            .map(|_| {
                let n_pre = rng.gen_range(0..=2);
                let pre = (0..n_pre).map(|_| (rng.gen_range(0..n_vars), rng.gen_bool(0.6))).collect();
                let n_flip = rng.gen_range(1..=2);
                let flips = (0..n_flip).map(|_| rng.gen_range(0..n_vars)).collect();
                let prob = if rng.gen_bool(0.7) { 1.0 } else { 0.5 };
                Rule { action: rng.gen_range(0..n_actions), pre, flips, prob }
            })
            .collect();
        let state = (0..n_vars).map(|_| rng.gen_bool(0.3)).collect();
        FuzzStream { rng, rules, state, n_actions, last_action: None, vars, actions }
    }

    /// Applies a random action and returns the next observation.
    pub fn next_observation(&mut self) -> Observation {
        if let Some(a) = self.last_action {
            let mut next = self.state.clone();
            for r in &self.rules {
                if r.action == a && r.pre.iter().all(|&(v, val)| self.state[v] == val) && self.rng.gen_bool(r.prob) {
                    for &f in &r.flips {
                        next[f] = !self.state[f];
                    }
                }
            }
            self.state = next;
        }
        let mut obs = Observation::new();
        for (i, &id) in self.vars.iter().enumerate() {
            obs.set(id, self.state[i]);
        }
        for (i, &id) in self.actions.iter().enumerate() {
            obs.set(id, self.last_action == Some(i));
        }
        self.last_action = Some(self.rng.gen_range(0..self.n_actions));
        obs
    }
}
