//! Encapsulation demo: plan from the start state to 1G, split the action
//! network into alternatives and encapsulate them.

use std::path::Path;

use modeller::encapsulation::{encapsulate_behavior, split_alternatives, Caps, Encapsulated, Graph};
use modeller::env::{EnvConfig, SmrEnv, Subtype};
use modeller::planner::{node_label, ActionNetwork, Groups, Node};
use modeller::{snapshot, LearningConfig, Model};

use crate::config::ExperimentConfig;
use crate::fsm::{encoding_from_model, Agent};
use crate::{trial_rng, HarnessError};

pub struct Demo {
    pub model: Model,
    pub groups: Groups,
    pub goal: Node,
    pub network: ActionNetwork,
    pub alternatives: Vec<Graph<Node>>,
    pub encapsulated: Encapsulated<Node>,
}

impl Demo {
    pub fn label(&self, n: &Node) -> String {
        node_label(&self.model, &self.groups, *n)
    }

    /// Skeleton edges of the top level as labels.
    pub fn skeleton(&self) -> Vec<(String, String)> {
        self.encapsulated.graph().edges.iter().map(|(a, b)| (self.label(a), self.label(b))).collect()
    }
}

/// Trains on Complete with random actions (or loads `encapsulation.model`),
/// then plans from the start state.
pub fn run_encapsulation_demo(cfg: &ExperimentConfig) -> Result<Demo, HarnessError> {
    let e = &cfg.encapsulation;
    let table = cfg.fsm_table()?;
    let env_cfg = |seed| EnvConfig { subtype: Subtype::Complete, random_variant: false, seed };
    let mut agent = match &e.model {
        Some(path) => {
            let model = snapshot::load_model(path)?;
            let enc = encoding_from_model(&model)?;
            Agent::with_model(model, enc, trial_rng(cfg.seed, 0, 1))
        }
        None => {
            let mut agent = Agent::new(LearningConfig::default(), false, trial_rng(cfg.seed, 0, 1));
            let mut env = SmrEnv::new(table.clone(), env_cfg(cfg.seed));
            for _ in 0..e.training_steps {
                agent.step(&mut env, None)?;
            }
            agent
        }
    };
    let mut env = SmrEnv::new(table, env_cfg(cfg.seed));
    env.reset();
    agent.model.break_continuity();
    // twice, so the previous-step states are the start state too
    for _ in 0..2 {
        agent.model.process_environment_step(&agent.enc.observe(&env))?;
    }
    let goal = agent.goal;
    let network = agent.planner.plan(&agent.model, &[goal]);
    let groups = agent.planner.groups(&agent.model).clone();
    let caps = Caps { alternatives: e.max_alternatives, paths: e.max_paths, depth: e.max_depth };
    let g = Graph::from_an(&network);
    let alternatives = split_alternatives(&g, &[goal], |n| matches!(n, Node::Csv(_)), caps.alternatives)?;
    let encapsulated = encapsulate_behavior(&alternatives, caps)?;
    Ok(Demo { model: agent.model, groups, goal, network, alternatives, encapsulated })
}

/// `an.json`, `an.dot`, `ean.json`, `ean.dot` and `model.json` in `dir`.
pub fn export(demo: &Demo, dir: &Path) -> Result<(), HarnessError> {
    let io = |e| HarnessError::Io(dir.to_path_buf(), e);
    std::fs::create_dir_all(dir).map_err(io)?;
    snapshot::save(&dir.join("an.json"), "action-network", &demo.network)?;
    std::fs::write(dir.join("an.dot"), demo.network.to_dot(&demo.model, &demo.groups)).map_err(io)?;
    snapshot::save(&dir.join("ean.json"), "encapsulated-action-network", &demo.encapsulated)?;
    let mut dot = String::new();
    for (name, g) in demo.encapsulated.levels() {
        dot.push_str(&g.to_dot(&name, |n| demo.label(n)));
    }
    std::fs::write(dir.join("ean.dot"), dot).map_err(io)?;
    snapshot::save_model(&dir.join("model.json"), &demo.model)?;
    Ok(())
}

/// Every top-level edge of the EAN is a path in every alternative.
pub fn skeleton_is_sound(e: &Encapsulated<Node>, alternatives: &[Graph<Node>]) -> bool {
    e.graph().edges.iter().all(|&(a, b)| alternatives.iter().all(|g| g.has_path(a, b)))
}
