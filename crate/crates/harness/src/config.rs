//! Experiment configuration. Files are TOML; every key is optional.

use std::path::{Path, PathBuf};

use modeller::env::Subtype;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    /// FSM table file; the compiled-in table when unset
    pub fsm_table: Option<PathBuf>,
    pub planning: PlanningConfig,
    pub continual: ContinualConfig,
    pub encapsulation: EncapsulationConfig,
    pub mnist: MnistConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            trials: 5,
            fsm_table: None,
            planning: PlanningConfig::default(),
            continual: ContinualConfig::default(),
            encapsulation: EncapsulationConfig::default(),
            mnist: MnistConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanningConfig {
    pub subtype: Subtype,
    pub random_variant: bool,
    pub random_steps: u64,
    pub planned_steps: u64,
    /// chance of a random action during the planned phase
    pub exploration: f64,
    /// NCE cutoff; applied only to the random variant
    pub eps_t: f64,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        PlanningConfig {
            subtype: Subtype::Complete,
            random_variant: false,
            random_steps: 4000,
            planned_steps: 4000,
            exploration: 0.1,
            eps_t: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub subtype: Subtype,
    pub learning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinualConfig {
    /// switch subtypes at episode ends and keep learning throughout
    pub readaptation: bool,
    pub schedule: Vec<Phase>,
    pub window: u64,
    pub readaptation_schedule: Vec<Subtype>,
    pub readaptation_window: u64,
    pub exploration: f64,
}

impl Default for ContinualConfig {
    fn default() -> Self {
        use Subtype::*;
        let p = |subtype, learning| Phase { subtype, learning };
        ContinualConfig {
            readaptation: false,
            schedule: vec![p(RS, true), p(SGS, true), p(NEG, true), p(RS, false), p(SGS, false)],
            window: 1000,
            readaptation_schedule: [RS, SGS, NEG].repeat(3),
            readaptation_window: 500,
            exploration: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncapsulationConfig {
    /// model snapshot to plan in; trained in-run when unset
    pub model: Option<PathBuf>,
    pub training_steps: u64,
    pub max_alternatives: usize,
    pub max_paths: usize,
    pub max_depth: usize,
}

impl Default for EncapsulationConfig {
    fn default() -> Self {
        let caps = modeller::encapsulation::Caps::default();
        EncapsulationConfig {
            model: None,
            training_steps: 4000,
            max_alternatives: caps.alternatives,
            max_paths: caps.paths,
            max_depth: caps.depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MnistConfig {
    /// IDX directory; `MNR_DATA_DIR` overrides, then `data/mnist`
    pub data_dir: Option<PathBuf>,
    pub n_classes: usize,
    /// per class per cycle; derived from `n_classes` when unset
    pub n_sample: Option<usize>,
    /// per class; derived from `n_classes` when unset
    pub test_size: Option<usize>,
    pub cycles: usize,
    pub population: usize,
    pub t_ref: f64,
    pub eps_sign: f64,
    pub max_depth: u32,
}

impl Default for MnistConfig {
    fn default() -> Self {
        let m = mnr::MnrConfig::default();
        MnistConfig {
            data_dir: None,
            n_classes: 3,
            n_sample: None,
            test_size: None,
            cycles: 10,
            population: m.population,
            t_ref: m.t_ref,
            eps_sign: m.eps_sign,
            max_depth: m.max_depth,
        }
    }
}

impl MnistConfig {
    /// Samples and test images per class for the configured class count.
    pub fn sizes(&self) -> (usize, usize) {
        let (s, t) = match self.n_classes {
            0..=3 => (20, 50),
            4..=5 => (10, 20),
            _ => (5, 10),
        };
        (self.n_sample.unwrap_or(s), self.test_size.unwrap_or(t))
    }

    pub fn mnr(&self) -> mnr::MnrConfig {
        mnr::MnrConfig {
            population: self.population,
            t_ref: self.t_ref,
            eps_sign: self.eps_sign,
            max_depth: self.max_depth,
        }
    }

    pub fn resolve_data_dir(&self) -> PathBuf {
        if let Some(d) = std::env::var_os("MNR_DATA_DIR") {
            return PathBuf::from(d);
        }
        self.data_dir.clone().unwrap_or_else(|| PathBuf::from("data/mnist"))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.to_path_buf(), e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        for (name, p) in
            [("planning.exploration", self.planning.exploration), ("continual.exploration", self.continual.exploration)]
        {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.planning.eps_t <= 0.0 {
            return bad("planning.eps_t must be positive");
        }
        if !(0.0..1.0).contains(&self.mnist.t_ref) {
            return bad("mnist.t_ref must lie in [0, 1)");
        }
        if self.mnist.n_classes == 0 || self.mnist.n_classes > 10 {
            return bad("mnist.n_classes must be 1..=10");
        }
        if self.mnist.population == 0 {
            return bad("mnist.population must be at least 1");
        }
        Ok(())
    }

    pub fn fsm_table(&self) -> Result<modeller::env::FsmTable, HarnessError> {
        match &self.fsm_table {
            Some(p) => modeller::env::FsmTable::load(p).map_err(HarnessError::Env),
            None => Ok(modeller::env::FsmTable::builtin()),
        }
    }
}
