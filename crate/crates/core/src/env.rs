//! Two-cell FSM test environment with RS, SGS and NEG subtypes.
//!
//! The transition table is a plain-text file (`data/fsm_table.txt`); a copy
//! is compiled in as the default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sv::{Model, Observation, SvId};

pub const N_ACTIONS: usize = 20;
pub const N_RANDOM: usize = 2;

pub const BUILTIN_TABLE: &str = include_str!("../../../data/fsm_table.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cell {
    DO,
    DC,
    W,
    G,
    SG1,
    SG2,
    X,
}

impl Cell {
    pub const ALL: [Cell; 7] = [Cell::DO, Cell::DC, Cell::W, Cell::G, Cell::SG1, Cell::SG2, Cell::X];

    pub fn name(self) -> &'static str {
        match self {
            Cell::DO => "DO",
            Cell::DC => "DC",
            Cell::W => "W",
            Cell::G => "G",
            Cell::SG1 => "SG1",
            Cell::SG2 => "SG2",
            Cell::X => "X",
        }
    }
}

/// Contents of both cells; `None` is empty.
pub type Cells = [Option<Cell>; 2];

#[cfg(test)]
fn fmt_cells(c: &Cells) -> String {
    let one = |x: Option<Cell>| x.map_or("-", Cell::name);
    format!("{},{}", one(c[0]), one(c[1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subtype {
    RS,
    SGS,
    NEG,
    Complete,
}

impl Subtype {
    pub const ALL: [Subtype; 4] = [Subtype::RS, Subtype::SGS, Subtype::NEG, Subtype::Complete];
}

impl fmt::Display for Subtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Subtype::RS => "RS",
            Subtype::SGS => "SGS",
            Subtype::NEG => "NEG",
            Subtype::Complete => "Complete",
        };
        f.write_str(s)
    }
}

impl FromStr for Subtype {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, EnvError> {
        match s {
            "RS" => Ok(Subtype::RS),
            "SGS" | "SG" => Ok(Subtype::SGS),
            "NEG" => Ok(Subtype::NEG),
            "Complete" => Ok(Subtype::Complete),
            _ => Err(EnvError::Parse(0, format!("unknown subtype {s}"))),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("fsm table line {0}: {1}")]
    Parse(usize, String),
    #[error("action {0} out of range 0..{N_ACTIONS}")]
    InvalidAction(usize),
    #[error("reading fsm table: {0}")]
    Io(String),
}

fn parse_cells(s: &str, line: usize) -> Result<Cells, EnvError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(EnvError::Parse(line, format!("bad cell pair {s}")));
    }
    let mut out = [None, None];
    for (i, p) in parts.iter().enumerate() {
        out[i] = match *p {
            "-" => None,
            name => Some(
                Cell::ALL
                    .into_iter()
                    .find(|c| c.name() == name)
                    .ok_or_else(|| EnvError::Parse(line, format!("unknown cell state {name}")))?,
            ),
        };
    }
    Ok(out)
}

/// Outcome distributions per (cells, action), per subtype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmTable {
    pub starts: BTreeMap<Subtype, Cells>,
    pub rows: BTreeMap<Subtype, BTreeMap<(Cells, usize), Vec<(Cells, f64)>>>,
}

impl FsmTable {
    pub fn builtin() -> FsmTable {
        FsmTable::parse(BUILTIN_TABLE).expect("builtin table parses")
    }

    pub fn load(path: &Path) -> Result<FsmTable, EnvError> {
        let text = std::fs::read_to_string(path).map_err(|e| EnvError::Io(format!("{}: {e}", path.display())))?;
        FsmTable::parse(&text)
    }

    pub fn parse(text: &str) -> Result<FsmTable, EnvError> {
        let mut starts = BTreeMap::new();
        let mut rows: BTreeMap<Subtype, BTreeMap<(Cells, usize), Vec<(Cells, f64)>>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let sub = |s: &str| s.parse::<Subtype>().map_err(|_| EnvError::Parse(ln, format!("unknown subtype {s}")));
            if f[0] == "start" {
                if f.len() != 3 {
                    return Err(EnvError::Parse(ln, "start needs subtype and cells".into()));
                }
                starts.insert(sub(f[1])?, parse_cells(f[2], ln)?);
                continue;
            }
            if f.len() < 4 {
                return Err(EnvError::Parse(ln, "expected subtype, cells, action, outcomes".into()));
            }
            let st = sub(f[0])?;
            if st == Subtype::Complete {
                return Err(EnvError::Parse(ln, "Complete rows are implied".into()));
            }
            let from = parse_cells(f[1], ln)?;
            let action: usize = f[2].parse().map_err(|_| EnvError::Parse(ln, format!("bad action {}", f[2])))?;
            if action >= N_ACTIONS {
                return Err(EnvError::Parse(ln, format!("action {action} out of range")));
            }
            let mut outs = Vec::new();
            for o in &f[3..] {
                let (c, p) = match o.split_once(':') {
                    Some((c, p)) => {
                        (c, p.parse::<f64>().map_err(|_| EnvError::Parse(ln, format!("bad probability {p}")))?)
                    }
                    None => (*o, 1.0),
                };
                outs.push((parse_cells(c, ln)?, p));
            }
            let total: f64 = outs.iter().map(|o| o.1).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(EnvError::Parse(ln, format!("probabilities sum to {total}")));
            }
            if rows.entry(st).or_default().insert((from, action), outs).is_some() {
                return Err(EnvError::Parse(ln, "duplicate row".into()));
            }
        }
        // Complete: rows shared by several subtypes pool their outcomes,
        // each distinct row weighted equally
        let mut pooled: BTreeMap<(Cells, usize), Vec<&Vec<(Cells, f64)>>> = BTreeMap::new();
        for r in rows.values() {
            for (k, v) in r {
                let e = pooled.entry(*k).or_default();
                if !e.contains(&v) {
                    e.push(v);
                }
            }
        }
        let complete = pooled
            .into_iter()
            .map(|(k, vs)| {
                let w = 1.0 / vs.len() as f64;
                let mut acc: BTreeMap<Cells, f64> = BTreeMap::new();
                for &(c, p) in vs.into_iter().flatten() {
                    *acc.entry(c).or_default() += p * w;
                }
                (k, acc.into_iter().collect())
            })
            .collect();
        rows.insert(Subtype::Complete, complete);
        for st in Subtype::ALL {
            if !starts.contains_key(&st) {
                return Err(EnvError::Parse(0, format!("no start for {st}")));
            }
        }
        Ok(FsmTable { starts, rows })
    }

    pub fn outcomes(&self, st: Subtype, from: &Cells, action: usize) -> Option<&[(Cells, f64)]> {
        self.rows.get(&st)?.get(&(*from, action)).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub subtype: Subtype,
    pub random_variant: bool,
    pub seed: u64,
}

pub fn goal_reached(cells: &Cells) -> bool {
    cells[0] == Some(Cell::G)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    /// Set on the step that reaches G: steps since the episode started.
    pub episode_done: Option<u64>,
    /// This step left G and restarted.
    pub reset: bool,
}

#[derive(Debug, Clone)]
pub struct SmrEnv {
    table: FsmTable,
    pub subtype: Subtype,
    pub random_variant: bool,
    rng: ChaCha8Rng,
    pub cells: Cells,
    pub random_bits: [bool; N_RANDOM],
    pub last_action: Option<usize>,
    /// steps since the current episode started
    pub episode_steps: u64,
}

impl SmrEnv {
    pub fn new(table: FsmTable, config: EnvConfig) -> SmrEnv {
        let cells = table.starts[&config.subtype];
        SmrEnv {
            table,
            subtype: config.subtype,
            random_variant: config.random_variant,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            cells,
            random_bits: [false; N_RANDOM],
            last_action: None,
            episode_steps: 0,
        }
    }

    pub fn reset(&mut self) {
        self.cells = self.table.starts[&self.subtype];
        self.random_bits = [false; N_RANDOM];
        self.episode_steps = 0;
    }

    /// Takes effect at the next episode start.
    pub fn set_subtype(&mut self, st: Subtype) {
        self.subtype = st;
    }

    pub fn goal_reached(&self) -> bool {
        goal_reached(&self.cells)
    }

    pub fn table(&self) -> &FsmTable {
        &self.table
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        if action >= N_ACTIONS {
            return Err(EnvError::InvalidAction(action));
        }
        self.last_action = Some(action);
        let mut out = StepOutcome { episode_done: None, reset: false };
        if self.goal_reached() {
            self.cells = self.table.starts[&self.subtype];
            self.episode_steps = 0;
            out.reset = true;
        } else {
            if let Some(outs) = self.table.outcomes(self.subtype, &self.cells, action) {
                let u: f64 = self.rng.gen();
                let mut acc = 0.0;
                let mut next = outs[outs.len() - 1].0;
                for &(c, p) in outs {
                    acc += p;
                    if u < acc {
                        next = c;
                        break;
                    }
                }
                self.cells = next;
            }
            self.episode_steps += 1;
            if self.goal_reached() {
                out.episode_done = Some(self.episode_steps);
            }
        }
        if self.random_variant {
            for b in self.random_bits.iter_mut() {
                *b = self.rng.gen_bool(0.5);
            }
        }
        Ok(out)
    }
}

/// BSV ids of the environment's observation inside a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmrEncoding {
    /// `[cell][state]`, labelled like `1G`
    pub cells: [[SvId; 7]; 2],
    pub actions: Vec<SvId>,
    pub random: Vec<SvId>,
}

impl SmrEncoding {
    pub fn register(model: &mut Model, random_variant: bool) -> SmrEncoding {
        let mut cells = [[SvId(0); 7]; 2];
        for (ci, row) in cells.iter_mut().enumerate() {
            for (si, c) in Cell::ALL.iter().enumerate() {
                row[si] = model.add_bsv(&format!("{}{}", ci + 1, c.name()), false);
            }
        }
        let actions = (0..N_ACTIONS).map(|a| model.add_bsv(&format!("a{a}"), true)).collect();
        let random = if random_variant {
            (0..N_RANDOM).map(|i| model.add_bsv(&format!("R{}", i + 1), false)).collect()
        } else {
            vec![]
        };
        SmrEncoding { cells, actions, random }
    }

    pub fn bsv(&self, cell: usize, state: Cell) -> SvId {
        self.cells[cell][Cell::ALL.iter().position(|&c| c == state).unwrap()]
    }

    pub fn action_index(&self, id: SvId) -> Option<usize> {
        self.actions.iter().position(|&a| a == id)
    }

    pub fn observe(&self, env: &SmrEnv) -> Observation {
        let mut o = Observation::new();
        for ci in 0..2 {
            for (si, c) in Cell::ALL.iter().enumerate() {
                o.set(self.cells[ci][si], env.cells[ci] == Some(*c));
            }
        }
        for (i, &a) in self.actions.iter().enumerate() {
            o.set(a, env.last_action == Some(i));
        }
        for (i, &r) in self.random.iter().enumerate() {
            o.set(r, env.random_bits[i]);
        }
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, VecDeque};

    fn env(st: Subtype, random: bool, seed: u64) -> SmrEnv {
        SmrEnv::new(FsmTable::builtin(), EnvConfig { subtype: st, random_variant: random, seed })
    }

    fn cells(s: &str) -> Cells {
        parse_cells(s, 0).unwrap()
    }

    #[test]
    fn starts() {
        assert_eq!(env(Subtype::Complete, false, 0).cells, cells("DC,W"));
        assert_eq!(env(Subtype::RS, false, 0).cells, cells("DC,W"));
        assert_eq!(env(Subtype::SGS, false, 0).cells, cells("-,-"));
    }

    #[test]
    fn door_opens_and_noop_keeps_state() {
        let mut e = env(Subtype::RS, false, 0);
        e.step(0).unwrap();
        assert_eq!(e.cells, cells("DO,W"));
        e.step(15).unwrap();
        assert_eq!(e.cells, cells("DO,W"));
        assert_eq!(e.step(20), Err(EnvError::InvalidAction(20)));
    }

    #[test]
    fn subtype_filters_rows() {
        // the door action does nothing in SGS
        let mut e = env(Subtype::SGS, false, 0);
        e.cells = cells("DC,W");
        e.step(0).unwrap();
        assert_eq!(e.cells, cells("DC,W"));
        // the shared empty-state action branches per subtype
        let t = FsmTable::builtin();
        let empty = cells("-,-");
        let sgs: Vec<Cells> = t.outcomes(Subtype::SGS, &empty, 3).unwrap().iter().map(|o| o.0).collect();
        assert_eq!(sgs, vec![cells("SG1,-"), cells("-,SG1")]);
        let all = t.outcomes(Subtype::Complete, &empty, 3).unwrap();
        assert_eq!(all.len(), 6);
        for st in [Subtype::RS, Subtype::SGS, Subtype::NEG] {
            for &(c, p) in t.outcomes(st, &empty, 3).unwrap() {
                let q = all.iter().find(|o| o.0 == c).unwrap().1;
                assert!((q - p / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn complete_pools_shared_rows() {
        let base = "start RS DC,W\nstart SGS -,-\nstart NEG -,-\nstart Complete DC,W\n";
        let t =
            FsmTable::parse(&format!("{base}RS DC,W 0 DO,W\nSGS DC,W 0 G,-:0.5 DO,W:0.5\nNEG DC,W 0 DO,W\n")).unwrap();
        let got = t.outcomes(Subtype::Complete, &cells("DC,W"), 0).unwrap();
        assert_eq!(got, &[(cells("DO,W"), 0.75), (cells("G,-"), 0.25)][..]);
    }

    #[test]
    fn malformed_tables_are_rejected() {
        let base = "start RS DC,W\nstart SGS -,-\nstart NEG -,-\nstart Complete DC,W\n";
        assert!(FsmTable::parse(&format!("{base}RS DC,W 0 DO,W:0.4 DC,W:0.4\n")).is_err());
        assert!(FsmTable::parse(&format!("{base}RS DC,W 0 QQ,W\n")).is_err());
        assert!(FsmTable::parse(&format!("{base}RS DC,W 0 DO,W\nRS DC,W 0 G,-\n")).is_err());
        assert!(FsmTable::parse("RS DC,W 0 DO,W\n").is_err());
        assert!(FsmTable::parse(&format!("{base}RS DC,W 25 DO,W\n")).is_err());
    }

    #[test]
    fn seeded_runs_repeat() {
        let run = |seed| {
            let mut e = env(Subtype::Complete, true, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            (0..500)
                .map(|_| {
                    e.step(rng.gen_range(0..N_ACTIONS)).unwrap();
                    (e.cells, e.random_bits)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn random_bits_start_off_and_vary() {
        let mut e = env(Subtype::Complete, true, 9);
        assert_eq!(e.random_bits, [false, false]);
        let mut on = [0; 2];
        for _ in 0..2000 {
            e.step(19).unwrap();
            for i in 0..2 {
                on[i] += e.random_bits[i] as u32;
            }
        }
        for n in on {
            assert!((900..1100).contains(&n), "{n}");
        }
    }

    #[test]
    fn goal_flag_matches_trace() {
        let mut e = env(Subtype::Complete, false, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut goals = 0;
        for _ in 0..1000 {
            let out = e.step(rng.gen_range(0..N_ACTIONS)).unwrap();
            assert_eq!(out.episode_done.is_some(), e.cells[0] == Some(Cell::G));
            assert_eq!(e.goal_reached(), e.cells[0] == Some(Cell::G));
            goals += out.episode_done.is_some() as u32;
        }
        assert!(goals > 0);
    }

    /// From every reachable NEG state, G only follows X in cell 1 without X in cell 2.
    #[test]
    fn neg_goal_needs_x_and_not_x() {
        let t = FsmTable::builtin();
        let start = t.starts[&Subtype::NEG];
        let mut seen = BTreeSet::from([start]);
        let mut q = VecDeque::from([start]);
        let mut g_pred = BTreeSet::new();
        while let Some(s) = q.pop_front() {
            if goal_reached(&s) {
                continue;
            }
            for a in 0..N_ACTIONS {
                let outs: Vec<Cells> =
                    t.outcomes(Subtype::NEG, &s, a).map(|o| o.iter().map(|x| x.0).collect()).unwrap_or(vec![s]);
                for n in outs {
                    if goal_reached(&n) {
                        g_pred.insert(s);
                    }
                    if seen.insert(n) {
                        q.push_back(n);
                    }
                }
            }
        }
        assert!(!g_pred.is_empty());
        for s in &g_pred {
            assert_eq!(s[0], Some(Cell::X));
            assert_ne!(s[1], Some(Cell::X));
        }
        assert!(seen.contains(&cells("X,X")));
    }

    fn scripted(cells: &Cells, st: Subtype) -> usize {
        match (fmt_cells(cells).as_str(), st) {
            ("DC,W", _) => 0,
            ("DO,W", _) => 1,
            ("-,-", _) => 3,
            ("SG1,-" | "-,SG1", _) => 5,
            ("SG2,-", _) => 6,
            ("X,X", _) => 9,
            ("X,-", _) => 8,
            _ => 19,
        }
    }

    fn mean_episode(st: Subtype, seed: u64, mut policy: impl FnMut(&SmrEnv, &mut ChaCha8Rng) -> usize) -> f64 {
        let mut e = env(st, false, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let mut eps = Vec::new();
        while eps.len() < 300 {
            let a = policy(&e, &mut rng);
            if let Some(n) = e.step(a).unwrap().episode_done {
                eps.push(n as f64);
            }
        }
        eps.iter().sum::<f64>() / eps.len() as f64
    }

    #[test]
    fn scripted_play_is_short() {
        for st in Subtype::ALL {
            let m = mean_episode(st, 1, |e, _| scripted(&e.cells, e.subtype));
            assert!(m <= 10.0, "{st}: {m}");
        }
    }

    #[test]
    fn random_play_is_long_on_complete() {
        let m = mean_episode(Subtype::Complete, 2, |_, r| r.gen_range(0..N_ACTIONS));
        assert!(m >= 50.0, "{m}");
    }

    #[test]
    fn encoding_is_one_hot() {
        let mut m = Model::default();
        let enc = SmrEncoding::register(&mut m, true);
        let mut e = env(Subtype::Complete, true, 0);
        let o = enc.observe(&e);
        assert!(enc.actions.iter().all(|&a| o.get(a) == Some(false)));
        assert_eq!(o.get(enc.bsv(0, Cell::DC)), Some(true));
        assert_eq!(o.get(enc.bsv(1, Cell::W)), Some(true));
        e.step(3).unwrap();
        let o = enc.observe(&e);
        assert_eq!(enc.actions.iter().filter(|&&a| o.get(a) == Some(true)).count(), 1);
        for c in 0..2 {
            assert!(enc.cells[c].iter().filter(|&&b| o.get(b) == Some(true)).count() <= 1);
        }
        assert_eq!(m.label(enc.bsv(0, Cell::G)), "1G");
    }
}
