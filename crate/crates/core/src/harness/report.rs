//! Aggregated results and their on-disk tables.
//!
//! | file | columns |
//! |---|---|
//! | `summary.csv` | [`SUMMARY_COLUMNS`] |
//! | `identification.csv` | [`IDENTIFICATION_COLUMNS`] |
//! | `trials.csv` | [`TRIAL_COLUMNS`] |
//! | `traces.csv` | [`TRACE_COLUMNS`] |
//! | `bound.csv` | [`BOUND_COLUMNS`] |
//! | `scaling.csv` | [`SCALING_COLUMNS`] |
//! | `manifest.toml` | [`Manifest`] |
//!
//! Every table is comma separated with a header row, also when empty.
//! Posterior and likelihood vectors in `traces.csv` are `;`-joined.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{normalize, HarnessConfig, ScalingRow, SolvedDomain, TrialResult};
use crate::baselines::AgentKind;
use crate::error::{Error, Result};
use crate::pomdp::model_hash;

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "domain",
    "agent",
    "trials",
    "mean_return",
    "std_return",
    "normalized_pct",
    "identified_fraction",
    "mean_first_identified",
];
pub const IDENTIFICATION_COLUMNS: [&str; 7] = [
    "domain",
    "agent",
    "t",
    "mean_true_posterior",
    "median_true_posterior",
    "argmax_fraction",
    "mean_entropy",
];
pub const TRIAL_COLUMNS: [&str; 8] = [
    "domain",
    "agent",
    "seed",
    "true_model",
    "initial_state",
    "steps",
    "total_return",
    "wall_ms",
];
pub const TRACE_COLUMNS: [&str; 10] = [
    "domain",
    "agent",
    "seed",
    "t",
    "action",
    "observation",
    "reward",
    "entropy",
    "posterior",
    "likelihoods",
];
pub const BOUND_COLUMNS: [&str; 8] = ["domain", "agent", "seed", "horizon", "left", "right", "slack", "violated"];
pub const SCALING_COLUMNS: [&str; 7] = [
    "k",
    "trials",
    "atpo_mean",
    "atpo_std",
    "vi_mean",
    "random_mean",
    "normalized_pct",
];

/// Identification statistics at one step, over all trials of an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct StepIdentification {
    pub t: usize,
    pub mean_true_posterior: f64,
    pub median_true_posterior: f64,
    /// Fraction of trials where the true model is the strict argmax.
    pub argmax_fraction: f64,
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    /// Fraction of trials where the true model was ever the strict argmax.
    pub identified_fraction: f64,
    /// Mean first identification step over the trials that got there.
    pub mean_first_identified: Option<f64>,
    /// One entry per step `0..=horizon`.
    pub steps: Vec<StepIdentification>,
}

impl Identification {
    /// Statistics at step `t`, held at the last step past the horizon.
    pub fn at(&self, t: usize) -> &StepIdentification {
        &self.steps[t.min(self.steps.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSummary {
    pub agent: AgentKind,
    pub trials: usize,
    pub mean_return: f64,
    /// Standard deviation over trials (divisor n).
    pub std_return: f64,
    /// Percent of the VI-to-random range; needs both anchors in the report.
    pub normalized: Option<f64>,
    pub identification: Option<Identification>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub domain: String,
    pub horizon: usize,
    pub num_models: usize,
    pub summaries: Vec<AgentSummary>,
    /// Sorted by agent, then seed.
    pub trials: Vec<TrialResult>,
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn identification(trials: &[&TrialResult], horizon: usize) -> Option<Identification> {
    if trials.is_empty() || !trials.iter().all(|t| t.has_posterior()) {
        return None;
    }
    let n = trials.len() as f64;
    let firsts: Vec<f64> = trials.iter().filter_map(|t| t.first_identified()).map(|f| f as f64).collect();
    let steps = (0..=horizon)
        .map(|t| {
            let truth: Vec<f64> = trials.iter().map(|r| r.true_posterior_at(t).unwrap()).collect();
            let hits = trials.iter().filter(|r| r.identified_at(t) == Some(true)).count();
            let ent: Vec<f64> = trials
                .iter()
                .map(|r| crate::pomdp::entropy(r.posterior_at(t).unwrap()))
                .collect();
            StepIdentification {
                t,
                mean_true_posterior: mean(&truth),
                median_true_posterior: median(&truth),
                argmax_fraction: hits as f64 / n,
                mean_entropy: mean(&ent),
            }
        })
        .collect();
    Some(Identification {
        identified_fraction: firsts.len() as f64 / n,
        mean_first_identified: (!firsts.is_empty()).then(|| mean(&firsts)),
        steps,
    })
}

impl ExperimentReport {
    /// Aggregates trials; the result does not depend on their order.
    pub fn from_trials(domain: String, horizon: usize, num_models: usize, mut trials: Vec<TrialResult>) -> Self {
        trials.sort_by_key(|t| (t.agent, t.seed));
        let mut summaries: Vec<AgentSummary> = Vec::new();
        for agent in AgentKind::ALL {
            let mine: Vec<&TrialResult> = trials.iter().filter(|t| t.agent == agent).collect();
            if mine.is_empty() {
                continue;
            }
            let totals: Vec<f64> = mine.iter().map(|t| t.total).collect();
            summaries.push(AgentSummary {
                agent,
                trials: mine.len(),
                mean_return: mean(&totals),
                std_return: std_dev(&totals),
                normalized: None,
                identification: identification(&mine, horizon),
            });
        }
        let anchor = |k| summaries.iter().find(|s| s.agent == k).map(|s| s.mean_return);
        if let (Some(vi), Some(random)) = (anchor(AgentKind::ValueIteration), anchor(AgentKind::Random)) {
            for s in &mut summaries {
                s.normalized = normalize(s.mean_return, vi, random);
            }
        }
        ExperimentReport {
            domain,
            horizon,
            num_models,
            summaries,
            trials,
        }
    }

    pub fn summary(&self, agent: AgentKind) -> Option<&AgentSummary> {
        self.summaries.iter().find(|s| s.agent == agent)
    }

    pub fn trials_of(&self, agent: AgentKind) -> impl Iterator<Item = &TrialResult> {
        self.trials.iter().filter(move |t| t.agent == agent)
    }

    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.summaries
            .iter()
            .map(|s| SummaryRow {
                domain: self.domain.clone(),
                agent: s.agent.to_string(),
                trials: s.trials,
                mean_return: s.mean_return,
                std_return: s.std_return,
                normalized_pct: s.normalized,
                identified_fraction: s.identification.as_ref().map(|i| i.identified_fraction),
                mean_first_identified: s.identification.as_ref().and_then(|i| i.mean_first_identified),
            })
            .collect()
    }

    pub fn trial_rows(&self) -> Vec<TrialRow> {
        self.trials
            .iter()
            .map(|t| TrialRow {
                domain: t.domain.clone(),
                agent: t.agent.to_string(),
                seed: t.seed,
                true_model: t.true_model,
                initial_state: t.initial_state,
                steps: t.rewards.len(),
                total_return: t.total,
                wall_ms: t.wall_time.as_secs_f64() * 1000.0,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub domain: String,
    pub agent: String,
    pub trials: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub normalized_pct: Option<f64>,
    pub identified_fraction: Option<f64>,
    pub mean_first_identified: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub domain: String,
    pub agent: String,
    pub seed: u64,
    pub true_model: usize,
    pub initial_state: usize,
    pub steps: usize,
    pub total_return: f64,
    pub wall_ms: f64,
}

#[derive(Serialize)]
struct IdentificationRow<'a> {
    domain: &'a str,
    agent: &'a str,
    t: usize,
    mean_true_posterior: f64,
    median_true_posterior: f64,
    argmax_fraction: f64,
    mean_entropy: f64,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    domain: &'a str,
    agent: &'a str,
    seed: u64,
    t: usize,
    action: usize,
    observation: usize,
    reward: f64,
    entropy: Option<f64>,
    posterior: String,
    likelihoods: String,
}

#[derive(Serialize)]
struct BoundRow<'a> {
    domain: &'a str,
    agent: &'a str,
    seed: u64,
    horizon: usize,
    left: f64,
    right: f64,
    slack: f64,
    violated: bool,
}

#[derive(Serialize)]
struct ScalingCsvRow {
    k: usize,
    trials: usize,
    atpo_mean: f64,
    atpo_std: f64,
    vi_mean: f64,
    random_mean: f64,
    normalized_pct: Option<f64>,
}

/// Everything needed to rerun an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub domain: String,
    pub agents: Vec<String>,
    pub trials: usize,
    /// Trial `i` uses seed `base_seed + i`.
    pub base_seed: String,
    pub mixture: String,
    pub bopa_mixture: String,
    pub likelihood_floor: Option<f64>,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    /// The domain spec in its TOML form.
    pub spec: String,
    pub solver: SolverEntry,
    pub models: Vec<ModelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverEntry {
    pub beliefs: usize,
    pub tolerance: f64,
    pub max_stages: usize,
    pub seed: u64,
    pub vi_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub index: usize,
    pub label: String,
    pub hash: String,
    pub states: usize,
    pub alpha_vectors: usize,
    pub stages: usize,
}

impl Manifest {
    pub fn new(
        domain: &SolvedDomain,
        agents: &[AgentKind],
        trials: usize,
        base_seed: u64,
        cfg: &HarnessConfig,
    ) -> Self {
        let spec = domain.spec();
        let lib = &domain.library;
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            domain: domain.name(),
            agents: agents.iter().map(|a| a.to_string()).collect(),
            trials,
            base_seed: base_seed.to_string(),
            mixture: format!("{:?}", cfg.atpo.mode).to_lowercase(),
            bopa_mixture: format!("{:?}", cfg.bopa_mode).to_lowercase(),
            likelihood_floor: cfg.atpo.likelihood_floor,
            build_seconds: domain.build_time.as_secs_f64(),
            solve_seconds: domain.solve_time.as_secs_f64(),
            spec: spec.to_toml(),
            solver: SolverEntry {
                beliefs: spec.solver.beliefs,
                tolerance: spec.solver.tolerance,
                max_stages: spec.solver.max_stages,
                seed: spec.solver.seed,
                vi_tolerance: super::VI_TOLERANCE,
            },
            models: (0..lib.len())
                .map(|k| ModelEntry {
                    index: k,
                    label: lib.model(k).label().to_string(),
                    hash: model_hash(lib.model(k)),
                    states: lib.model(k).num_states(),
                    alpha_vectors: lib.policy(k).vectors().len(),
                    stages: lib.policy(k).meta.stages,
                })
                .collect(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Configuration(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))
    }
}

fn write_table<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| into_io(path, e))?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn into_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Configuration(format!("{}: {other:?}", path.display())),
    }
}

fn read_table<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| into_io(path, e))?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes every table of `report`, plus `manifest.toml` when given. Returns the paths written.
pub fn emit_reports(report: &ExperimentReport, manifest: Option<&Manifest>, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let domain = report.domain.as_str();

    let path = dir.join("summary.csv");
    write_table(&path, &SUMMARY_COLUMNS, report.summary_rows())?;
    written.push(path);

    let path = dir.join("identification.csv");
    let rows = report.summaries.iter().flat_map(|s| {
        let agent = s.agent.name();
        s.identification.iter().flat_map(move |i| {
            i.steps.iter().map(move |st| IdentificationRow {
                domain,
                agent,
                t: st.t,
                mean_true_posterior: st.mean_true_posterior,
                median_true_posterior: st.median_true_posterior,
                argmax_fraction: st.argmax_fraction,
                mean_entropy: st.mean_entropy,
            })
        })
    });
    write_table(&path, &IDENTIFICATION_COLUMNS, rows)?;
    written.push(path);

    let path = dir.join("trials.csv");
    write_table(&path, &TRIAL_COLUMNS, report.trial_rows())?;
    written.push(path);

    let path = dir.join("traces.csv");
    let rows = report.trials.iter().flat_map(|tr| {
        (0..tr.actions.len()).map(move |i| {
            let post = tr.posterior_trace.get(i + 1);
            TraceRow {
                domain,
                agent: tr.agent.name(),
                seed: tr.seed,
                t: i + 1,
                action: tr.actions[i],
                observation: tr.observations[i],
                reward: tr.rewards[i],
                entropy: post.map(|p| crate::pomdp::entropy(p)),
                posterior: post.map(|p| join(p)).unwrap_or_default(),
                likelihoods: tr.likelihood_trace.get(i).map(|l| join(l)).unwrap_or_default(),
            }
        })
    });
    write_table(&path, &TRACE_COLUMNS, rows)?;
    written.push(path);

    let path = dir.join("bound.csv");
    let rows = report.trials.iter().filter_map(|tr| {
        tr.bound.as_ref().map(|b| BoundRow {
            domain,
            agent: tr.agent.name(),
            seed: tr.seed,
            horizon: b.horizon,
            left: b.left,
            right: b.right,
            slack: b.slack(),
            violated: b.violated(),
        })
    });
    write_table(&path, &BOUND_COLUMNS, rows)?;
    written.push(path);

    if let Some(m) = manifest {
        let path = dir.join("manifest.toml");
        fs::write(&path, m.to_toml()?).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_scaling(rows: &[ScalingRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_table(
        path,
        &SCALING_COLUMNS,
        rows.iter().map(|r| ScalingCsvRow {
            k: r.k,
            trials: r.trials,
            atpo_mean: r.atpo_mean,
            atpo_std: r.atpo_std,
            vi_mean: r.vi_mean,
            random_mean: r.random_mean,
            normalized_pct: r.normalized,
        }),
    )
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    read_table(path)
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRow>> {
    read_table(path)
}
