//! FSM experiments: base planning and continual learning across subtypes.

use std::collections::BTreeMap;

use modeller::env::{Cell, EnvConfig, FsmTable, SmrEncoding, SmrEnv, StepOutcome, Subtype, N_ACTIONS};
use modeller::planner::{select_action, Node, Planner, TargetEffect};
use modeller::significance::is_blocked;
use modeller::{LearningConfig, Model, SvId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Phase};
use crate::metrics::{mean_std, Episode, Metrics, ModelSize};
use crate::{trial_rng, HarnessError};

const ENV_STREAM: u64 = 0;
const AGENT_STREAM: u64 = 1;
const BASELINE_STREAM: u64 = 2;

pub const SIZE_EVERY: u64 = 100;

/// Model, its encoding and the planner state of one trial.
pub struct Agent {
    pub model: Model,
    pub enc: SmrEncoding,
    pub planner: Planner,
    pub goal: Node,
    pub rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(config: LearningConfig, random_variant: bool, rng: ChaCha8Rng) -> Agent {
        let mut model = Model::new(config);
        let enc = SmrEncoding::register(&mut model, random_variant);
        Agent::with_model(model, enc, rng)
    }

    pub fn with_model(model: Model, enc: SmrEncoding, rng: ChaCha8Rng) -> Agent {
        let goal = Node::Bsv(enc.bsv(0, Cell::G), TargetEffect::One);
        Agent { model, enc, planner: Planner::new(), goal, rng }
    }

    /// Observe, choose and act. `explore` is the chance of a random action;
    /// `None` means acting at random throughout.
    pub fn step(&mut self, env: &mut SmrEnv, explore: Option<f64>) -> Result<StepOutcome, HarnessError> {
        self.model.process_environment_step(&self.enc.observe(env))?;
        let action = match explore {
            Some(p) if !self.rng.gen_bool(p) => {
                let net = self.planner.plan(&self.model, &[self.goal]);
                let a = select_action(&self.model, &net, &self.enc.actions, &mut self.rng).action();
                self.enc.action_index(a).expect("planner picks action BSVs")
            }
            _ => self.rng.gen_range(0..N_ACTIONS),
        };
        Ok(env.step(action)?)
    }
}

/// Rebuilds the SMR encoding of a model from its BSV labels.
pub fn encoding_from_model(model: &Model) -> Result<SmrEncoding, HarnessError> {
    let find = |l: &str| model.bsv_by_label(l).ok_or_else(|| HarnessError::Input(format!("model has no BSV {l}")));
    let mut cells = [[SvId(0); 7]; 2];
    for (ci, row) in cells.iter_mut().enumerate() {
        for (si, c) in Cell::ALL.iter().enumerate() {
            row[si] = find(&format!("{}{}", ci + 1, c.name()))?;
        }
    }
    let actions = (0..N_ACTIONS).map(|a| find(&format!("a{a}"))).collect::<Result<_, _>>()?;
    let random = (1..).map_while(|i| model.bsv_by_label(&format!("R{i}"))).collect();
    Ok(SmrEncoding { cells, actions, random })
}

/// Blocking status of CSVs related to the random BSVs: `onto` counts CSVs
/// with a target among the random BSVs' DSVs, `from` CSVs with a random BSV
/// or one of its DSVs as a source.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RandomBlocking {
    pub onto: usize,
    pub onto_blocked: usize,
    pub from: usize,
    pub from_blocked: usize,
}

pub fn random_blocking(model: &Model, enc: &SmrEncoding, eps_t: f64) -> RandomBlocking {
    let mut related = std::collections::BTreeSet::new();
    for &r in &enc.random {
        related.insert(r);
        if let Some((a, d)) = model.bsv(r).and_then(|b| b.dsvs) {
            related.insert(a);
            related.insert(d);
        }
    }
    let mut out = RandomBlocking::default();
    for c in model.csvs() {
        let blocked = is_blocked(c.stats.values(), eps_t);
        if c.targets.iter().any(|t| related.contains(t)) {
            out.onto += 1;
            out.onto_blocked += blocked as usize;
        }
        if c.sources().any(|s| related.contains(&s)) {
            out.from += 1;
            out.from_blocked += blocked as usize;
        }
    }
    out
}

struct TrialOut {
    episodes: Vec<Episode>,
    sizes: Vec<ModelSize>,
    extra: BTreeMap<String, f64>,
}

struct Recorder<'a> {
    trial: usize,
    step: u64,
    out: &'a mut TrialOut,
}

impl Recorder<'_> {
    fn after(&mut self, model: &Model, o: StepOutcome, phase: usize, label: &str, subtype: Subtype, learning: bool) {
        if let Some(d) = o.episode_done {
            self.out.episodes.push(Episode {
                trial: self.trial,
                phase,
                label: label.to_string(),
                subtype,
                learning,
                end_step: self.step,
                duration: d,
            });
        }
        self.step += 1;
        if self.step % SIZE_EVERY == 0 {
            self.out.sizes.push(ModelSize { trial: self.trial, step: self.step, size: model.csv_count() });
        }
    }
}

fn run_trials(
    cfg: &ExperimentConfig,
    f: impl Fn(usize) -> Result<TrialOut, HarnessError> + Sync + Send,
) -> Result<Vec<TrialOut>, HarnessError> {
    (0..cfg.trials).into_par_iter().map(f).collect()
}

fn env_for(cfg: &ExperimentConfig, table: &FsmTable, subtype: Subtype, random_variant: bool, trial: usize) -> SmrEnv {
    use rand::RngCore;
    let seed = trial_rng(cfg.seed, trial, ENV_STREAM).next_u64();
    SmrEnv::new(table.clone(), EnvConfig { subtype, random_variant, seed })
}

fn collect(m: &mut Metrics, outs: Vec<TrialOut>) -> Vec<BTreeMap<String, f64>> {
    let mut extras = Vec::new();
    for o in outs {
        m.episodes.extend(o.episodes);
        m.model_size.extend(o.sizes);
        extras.push(o.extra);
    }
    extras
}

fn put_stats(m: &mut Metrics, key: &str, vals: &[f64]) {
    if let Some((mean, sd)) = mean_std(vals) {
        m.summary.insert(format!("{key}.mean"), mean);
        m.summary.insert(format!("{key}.std"), sd);
    }
}

/// Random-action learning phase, then planned phase with exploration.
pub fn run_base_planning(cfg: &ExperimentConfig) -> Result<Metrics, HarnessError> {
    let p = &cfg.planning;
    let table = cfg.fsm_table()?;
    let learning = LearningConfig { eps_t: p.random_variant.then_some(p.eps_t), ..LearningConfig::default() };
    let outs = run_trials(cfg, |trial| {
        let mut env = env_for(cfg, &table, p.subtype, p.random_variant, trial);
        let mut agent = Agent::new(learning, p.random_variant, trial_rng(cfg.seed, trial, AGENT_STREAM));
        let mut out = TrialOut { episodes: vec![], sizes: vec![], extra: BTreeMap::new() };
        let mut rec = Recorder { trial, step: 0, out: &mut out };
        for _ in 0..p.random_steps {
            let o = agent.step(&mut env, None)?;
            rec.after(&agent.model, o, 0, "random", p.subtype, true);
        }
        env.reset();
        agent.model.break_continuity();
        for _ in 0..p.planned_steps {
            let o = agent.step(&mut env, Some(p.exploration))?;
            rec.after(&agent.model, o, 1, "planned", p.subtype, true);
        }
        out.extra.insert("csvs".into(), agent.model.csv_count() as f64);
        if p.random_variant {
            let b = random_blocking(&agent.model, &agent.enc, p.eps_t);
            out.extra.insert("onto".into(), b.onto as f64);
            out.extra.insert("onto_blocked".into(), b.onto_blocked as f64);
            out.extra.insert("from".into(), b.from as f64);
            out.extra.insert("from_blocked".into(), b.from_blocked as f64);
        }
        Ok(out)
    })?;
    let name = if p.random_variant { "plan-base-random" } else { "plan-base" };
    let mut m = Metrics::new(name, cfg.seed, cfg.trials);
    let extras = collect(&mut m, outs);
    for label in ["random", "planned"] {
        let v = m.trial_means(|e| e.label == label);
        put_stats(&mut m, label, &v);
    }
    for key in ["csvs", "onto", "onto_blocked", "from", "from_blocked"] {
        if extras.iter().all(|e| e.contains_key(key)) {
            m.summary.insert(format!("{key}.total"), extras.iter().map(|e| e[key]).sum());
        }
    }
    Ok(m)
}

pub fn phase_label(p: &Phase) -> String {
    format!("{}-{}", p.subtype, if p.learning { "L" } else { "NL" })
}

/// Vanilla schedule (fixed windows, reset at each switch) or the
/// readaptation schedule (switches wait for the episode end, learning on).
/// Both add a random-action baseline per subtype.
pub fn run_continual(cfg: &ExperimentConfig) -> Result<Metrics, HarnessError> {
    let c = &cfg.continual;
    let table = cfg.fsm_table()?;
    let outs = run_trials(cfg, |trial| {
        let mut out = TrialOut { episodes: vec![], sizes: vec![], extra: BTreeMap::new() };
        let mut agent = Agent::new(LearningConfig::default(), false, trial_rng(cfg.seed, trial, AGENT_STREAM));
        if c.readaptation {
            readaptation_trial(cfg, &table, trial, &mut agent, &mut out)?;
        } else {
            vanilla_trial(cfg, &table, trial, &mut agent, &mut out)?;
        }
        baseline_trial(cfg, &table, trial, &mut out)?;
        Ok(out)
    })?;
    let name = if c.readaptation { "continual-readaptation" } else { "continual" };
    let mut m = Metrics::new(name, cfg.seed, cfg.trials);
    collect(&mut m, outs);
    let labels: std::collections::BTreeSet<String> = m.episodes.iter().map(|e| e.label.clone()).collect();
    for l in labels {
        let v = m.trial_means(|e| e.label == l);
        put_stats(&mut m, &l, &v);
    }
    if c.readaptation {
        for (phase, st, ratio) in readaptation_ratios(&m) {
            m.summary.insert(format!("window{phase}.{st}.ratio"), ratio);
        }
    }
    Ok(m)
}

fn vanilla_trial(
    cfg: &ExperimentConfig,
    table: &FsmTable,
    trial: usize,
    agent: &mut Agent,
    out: &mut TrialOut,
) -> Result<(), HarnessError> {
    let c = &cfg.continual;
    let Some(first) = c.schedule.first() else { return Ok(()) };
    let mut env = env_for(cfg, table, first.subtype, false, trial);
    let mut rec = Recorder { trial, step: 0, out };
    for (i, ph) in c.schedule.iter().enumerate() {
        env.set_subtype(ph.subtype);
        env.reset();
        agent.model.break_continuity();
        agent.model.config.learning_enabled = ph.learning;
        let label = phase_label(ph);
        for _ in 0..c.window {
            let o = agent.step(&mut env, Some(c.exploration))?;
            rec.after(&agent.model, o, i, &label, ph.subtype, ph.learning);
        }
    }
    agent.model.config.learning_enabled = true;
    Ok(())
}

fn readaptation_trial(
    cfg: &ExperimentConfig,
    table: &FsmTable,
    trial: usize,
    agent: &mut Agent,
    out: &mut TrialOut,
) -> Result<(), HarnessError> {
    let c = &cfg.continual;
    let sched = &c.readaptation_schedule;
    let Some(&first) = sched.first() else { return Ok(()) };
    let mut env = env_for(cfg, table, first, false, trial);
    let mut rec = Recorder { trial, step: 0, out };
    // window whose subtype the environment is running
    let mut active = 0usize;
    for k in 0..sched.len() as u64 * c.readaptation_window {
        let wanted = (k / c.readaptation_window) as usize;
        let o = agent.step(&mut env, Some(c.exploration))?;
        let st = sched[active];
        rec.after(&agent.model, o, active, &st.to_string(), st, true);
        // G is left on the next step, which restarts under the new subtype
        if o.episode_done.is_some() && wanted != active {
            active = wanted;
            env.set_subtype(sched[active]);
        }
    }
    Ok(())
}

fn baseline_trial(
    cfg: &ExperimentConfig,
    table: &FsmTable,
    trial: usize,
    out: &mut TrialOut,
) -> Result<(), HarnessError> {
    let c = &cfg.continual;
    let (subtypes, window): (Vec<Subtype>, u64) = if c.readaptation {
        (c.readaptation_schedule.clone(), c.readaptation_window)
    } else {
        (c.schedule.iter().map(|p| p.subtype).collect(), c.window)
    };
    let mut seen = std::collections::BTreeSet::new();
    let mut rng = trial_rng(cfg.seed, trial, BASELINE_STREAM);
    for st in subtypes.into_iter().filter(|s| seen.insert(*s)) {
        use rand::RngCore;
        let mut env =
            SmrEnv::new(table.clone(), EnvConfig { subtype: st, random_variant: false, seed: rng.next_u64() });
        let label = format!("random-{st}");
        let mut step = 0u64;
        for _ in 0..window {
            let o = env.step(rng.gen_range(0..N_ACTIONS))?;
            if let Some(d) = o.episode_done {
                out.episodes.push(Episode {
                    trial,
                    phase: usize::MAX,
                    label: label.clone(),
                    subtype: st,
                    learning: false,
                    end_step: step,
                    duration: d,
                });
            }
            step += 1;
        }
    }
    Ok(())
}

/// For each readaptation window after a subtype's first, its trial-averaged
/// mean duration over the first window's mean. Windows without episodes in
/// every trial compare the trials that have them.
pub fn readaptation_ratios(m: &Metrics) -> Vec<(usize, Subtype, f64)> {
    let mut phases: BTreeMap<usize, Subtype> = BTreeMap::new();
    for e in m.episodes.iter().filter(|e| e.phase != usize::MAX) {
        phases.insert(e.phase, e.subtype);
    }
    let mean_of = |ph: usize| mean_std(&m.trial_means(|e| e.phase == ph)).map(|x| x.0);
    let mut first: BTreeMap<Subtype, f64> = BTreeMap::new();
    let mut out = Vec::new();
    for (&ph, &st) in &phases {
        let Some(v) = mean_of(ph) else { continue };
        match first.get(&st) {
            None => {
                first.insert(st, v);
            }
            Some(&f) => out.push((ph, st, v / f)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trials: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig { trials, seed: 3, ..ExperimentConfig::default() };
        c.planning.random_steps = 300;
        c.planning.planned_steps = 200;
        c.continual.window = 200;
        c.continual.readaptation_window = 150;
        c
    }

    #[test]
    fn zero_planned_steps_cover_only_random_phase() {
        let mut c = small(2);
        c.planning.planned_steps = 0;
        let m = run_base_planning(&c).unwrap();
        assert!(m.episodes.iter().all(|e| e.label == "random"));
        assert!(m.summary.contains_key("random.mean"));
        assert!(!m.summary.contains_key("planned.mean"));
        assert_eq!(m.model_size.len(), 2 * 3);
    }

    #[test]
    fn encoding_rebuilds_from_labels() {
        for rv in [false, true] {
            let mut model = Model::default();
            let enc = SmrEncoding::register(&mut model, rv);
            assert_eq!(encoding_from_model(&model).unwrap(), enc);
        }
        assert!(encoding_from_model(&Model::default()).is_err());
    }

    #[test]
    fn readaptation_waits_for_episode_end() {
        let mut c = small(1);
        c.continual.readaptation = true;
        let m = run_continual(&c).unwrap();
        let agent_eps: Vec<&Episode> = m.episodes.iter().filter(|e| e.phase != usize::MAX).collect();
        // phases never go backwards and labels match their subtype
        assert!(agent_eps.windows(2).all(|w| w[0].phase <= w[1].phase));
        assert!(agent_eps.iter().all(|e| e.label == e.subtype.to_string()));
        assert!(m.episodes.iter().any(|e| e.label == "random-SGS"));
    }

    #[test]
    fn vanilla_labels_follow_schedule() {
        let m = run_continual(&small(1)).unwrap();
        for e in m.episodes.iter().filter(|e| e.phase != usize::MAX) {
            let ph = &ExperimentConfig::default().continual.schedule[e.phase];
            assert_eq!(e.label, phase_label(ph));
            assert_eq!(e.end_step / 200, e.phase as u64);
        }
    }
}
