//! Domain specifications and their TOML form.
//!
//! ```toml
//! domain = "gridworld"   # gridworld, pursuit-task, pursuit-teammate, pursuit-both,
//!                        # power-plant, overcooked, ntu, isr, mit, pentagon, cit
//! width = 4
//! height = 4
//! epsilon = 0.2
//! horizon = 50
//! tasks = 4              # first K tasks, or a list of task indices; omit for all
//! seed = 1
//!
//! [solver]
//! beliefs = 5000
//! tolerance = 0.01
//! max_stages = 500
//! seed = 0
//! ```

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::solvers::{PerseusConfig, DEFAULT_MAX_STAGES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PursuitVariant {
    /// Four capture configurations, greedy teammate.
    Task,
    /// Greedy and teammate-aware teammates on one capture configuration.
    Teammate,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DomainKind {
    Gridworld,
    Pursuit(PursuitVariant),
    PowerPlant,
    /// Navigation on a named map (`ntu`, `isr`, `mit`, `pentagon`, `cit`).
    Map(String),
    Overcooked,
}

pub const MAP_NAMES: [&str; 5] = ["ntu", "isr", "mit", "pentagon", "cit"];

impl DomainKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "gridworld" => DomainKind::Gridworld,
            "pursuit-task" => DomainKind::Pursuit(PursuitVariant::Task),
            "pursuit-teammate" => DomainKind::Pursuit(PursuitVariant::Teammate),
            "pursuit-both" => DomainKind::Pursuit(PursuitVariant::Both),
            "power-plant" => DomainKind::PowerPlant,
            "overcooked" => DomainKind::Overcooked,
            m if MAP_NAMES.contains(&m) => DomainKind::Map(m.to_string()),
            other => return Err(Error::InvalidDomain(format!("unknown domain `{other}`"))),
        })
    }

    /// Every benchmark domain, in table order.
    pub fn all() -> Vec<DomainKind> {
        let mut v = vec![
            DomainKind::Gridworld,
            DomainKind::Pursuit(PursuitVariant::Task),
            DomainKind::Pursuit(PursuitVariant::Teammate),
            DomainKind::Pursuit(PursuitVariant::Both),
            DomainKind::PowerPlant,
            DomainKind::Map("ntu".into()),
            DomainKind::Overcooked,
        ];
        v.extend(MAP_NAMES[1..].iter().map(|m| DomainKind::Map(m.to_string())));
        v
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainKind::Gridworld => f.write_str("gridworld"),
            DomainKind::Pursuit(PursuitVariant::Task) => f.write_str("pursuit-task"),
            DomainKind::Pursuit(PursuitVariant::Teammate) => f.write_str("pursuit-teammate"),
            DomainKind::Pursuit(PursuitVariant::Both) => f.write_str("pursuit-both"),
            DomainKind::PowerPlant => f.write_str("power-plant"),
            DomainKind::Overcooked => f.write_str("overcooked"),
            DomainKind::Map(m) => f.write_str(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LibrarySelector {
    All,
    First(usize),
    Indices(Vec<usize>),
}

impl LibrarySelector {
    /// Picks task indices out of `available`.
    pub fn select(&self, available: usize) -> Result<Vec<usize>> {
        let chosen: Vec<usize> = match self {
            LibrarySelector::All => (0..available).collect(),
            LibrarySelector::First(k) if *k <= available => (0..*k).collect(),
            LibrarySelector::First(k) => {
                return Err(Error::InvalidDomain(format!("asked for {k} tasks, only {available} exist")))
            }
            LibrarySelector::Indices(v) => v.clone(),
        };
        if let Some(&bad) = chosen.iter().find(|&&i| i >= available) {
            return Err(Error::InvalidDomain(format!("task {bad} out of range (0..{available})")));
        }
        if chosen.is_empty() {
            return Err(Error::InvalidDomain("library selection is empty".into()));
        }
        Ok(chosen)
    }
}

impl fmt::Display for LibrarySelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LibrarySelector::All => f.write_str("all"),
            LibrarySelector::First(k) => write!(f, "first{k}"),
            LibrarySelector::Indices(v) => {
                let s: Vec<String> = v.iter().map(usize::to_string).collect();
                write!(f, "[{}]", s.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub beliefs: usize,
    pub tolerance: f64,
    pub max_stages: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Grid size for gridworld and pursuit; ignored elsewhere.
    pub width: usize,
    pub height: usize,
    pub epsilon: f64,
    pub horizon: usize,
    pub library: LibrarySelector,
    /// Seeds the task ordering where tasks are drawn (gridworld).
    pub seed: u64,
    pub solver: SolverSettings,
}

impl DomainSpec {
    /// Full-size settings of the benchmark.
    pub fn benchmark(kind: DomainKind) -> Self {
        use PursuitVariant::*;
        let (epsilon, horizon, beliefs, library) = match &kind {
            DomainKind::Gridworld => (0.2, 50, 5000, LibrarySelector::First(4)),
            DomainKind::Pursuit(Task) => (0.2, 75, 5000, LibrarySelector::All),
            DomainKind::Pursuit(Teammate | Both) => (0.15, 85, 5000, LibrarySelector::All),
            DomainKind::PowerPlant => (0.2, 50, 2500, LibrarySelector::All),
            DomainKind::Overcooked => (0.0, 50, 1800, LibrarySelector::All),
            DomainKind::Map(m) if m == "cit" => (0.1, 85, 8000, LibrarySelector::All),
            DomainKind::Map(_) => (0.2, 75, 5000, LibrarySelector::All),
        };
        DomainSpec {
            kind,
            width: 5,
            height: 5,
            epsilon,
            horizon,
            library,
            seed: 0,
            solver: SolverSettings {
                beliefs,
                tolerance: 0.01,
                max_stages: DEFAULT_MAX_STAGES,
                seed: 0,
            },
        }
    }

    pub fn perseus_config(&self) -> PerseusConfig {
        PerseusConfig {
            belief_set_size: self.solver.beliefs,
            horizon: self.horizon,
            tolerance: self.solver.tolerance,
            max_stages: self.solver.max_stages,
            seed: self.solver.seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidDomain(format!("noise {} must lie in [0, 1)", self.epsilon)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidDomain("horizon must be at least 1".into()));
        }
        if matches!(self.kind, DomainKind::Gridworld | DomainKind::Pursuit(_)) && (self.width < 2 || self.height < 2) {
            return Err(Error::InvalidDomain(format!("grid {}x{} is too small", self.width, self.height)));
        }
        if self.solver.beliefs == 0 || !(self.solver.tolerance > 0.0) {
            return Err(Error::InvalidDomain("solver needs beliefs >= 1 and a positive tolerance".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))?;
        let kind = DomainKind::parse(&raw.domain)?;
        let mut spec = DomainSpec::benchmark(kind);
        if let Some(w) = raw.width {
            spec.width = w;
        }
        if let Some(h) = raw.height {
            spec.height = h;
        }
        if let Some(e) = raw.epsilon {
            spec.epsilon = e;
        }
        if let Some(h) = raw.horizon {
            spec.horizon = h;
        }
        if let Some(s) = raw.seed {
            spec.seed = s;
        }
        spec.library = match raw.tasks {
            None => spec.library,
            Some(RawTasks::Count(k)) => LibrarySelector::First(k),
            Some(RawTasks::List(v)) => LibrarySelector::Indices(v),
        };
        if let Some(s) = raw.solver {
            let d = &mut spec.solver;
            d.beliefs = s.beliefs.unwrap_or(d.beliefs);
            d.tolerance = s.tolerance.unwrap_or(d.tolerance);
            d.max_stages = s.max_stages.unwrap_or(d.max_stages);
            d.seed = s.seed.unwrap_or(d.seed);
        }
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// TOML text that [`from_toml`](Self::from_toml) reads back to `self`.
    pub fn to_toml(&self) -> String {
        let tasks = match &self.library {
            LibrarySelector::All => String::new(),
            LibrarySelector::First(k) => format!("tasks = {k}\n"),
            LibrarySelector::Indices(v) => {
                let s: Vec<String> = v.iter().map(usize::to_string).collect();
                format!("tasks = [{}]\n", s.join(", "))
            }
        };
        format!(
            "domain = \"{}\"\nwidth = {}\nheight = {}\nepsilon = {:?}\nhorizon = {}\n{tasks}seed = {}\n\n[solver]\nbeliefs = {}\ntolerance = {:?}\nmax_stages = {}\nseed = {}\n",
            self.kind,
            self.width,
            self.height,
            self.epsilon,
            self.horizon,
            self.seed,
            self.solver.beliefs,
            self.solver.tolerance,
            self.solver.max_stages,
            self.solver.seed
        )
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    domain: String,
    width: Option<usize>,
    height: Option<usize>,
    epsilon: Option<f64>,
    horizon: Option<usize>,
    tasks: Option<RawTasks>,
    seed: Option<u64>,
    solver: Option<RawSolver>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTasks {
    Count(usize),
    List(Vec<usize>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    beliefs: Option<usize>,
    tolerance: Option<f64>,
    max_stages: Option<usize>,
    seed: Option<u64>,
}
