//! Seeded trials, aggregation and the library-scaling sweep.
//!
//! A trial draws the active model and start state from an environment RNG
//! stream, and the agent draws from a second stream of the same seed, so
//! agents that act differently still face the same environment noise for
//! the same seed.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::atpo::{self, check_bound, AtpoConfig, BoundReport, BoundStep, MixtureMode, ModelLibrary};
use crate::baselines::{
    Agent, AgentKind, AtpoAgent, BopaAgent, EpisodeStart, Feedback, PerseusAgent, RandomAgent, RandomPickerAgent,
    ValueIterationAgent,
};
use crate::domains::{self, DomainInstance, DomainSpec, GroundTruth, LibrarySelector};
use crate::error::{Error, Result};
use crate::pomdp::{entropy, simulate_step};
use crate::solvers::{perseus_solve, value_iteration, AlphaVectorPolicy, PolicyCache, StateValueFunction};

pub mod report;

pub use report::{emit_reports, read_summary, read_trials, write_scaling, AgentSummary, ExperimentReport, Identification};

#[cfg(test)]
mod tests;

/// Steps at which identification is summarized.
pub const CHECKPOINTS: [usize; 3] = [5, 10, 20];

/// Convergence tolerance of the value iteration behind the VI and BOPA agents.
pub const VI_TOLERANCE: f64 = 1e-6;

const ENV_STREAM: u64 = 0;
const AGENT_STREAM: u64 = 1;

/// A built library with every model solved.
#[derive(Debug, Clone)]
pub struct SolvedDomain {
    pub instance: DomainInstance,
    pub library: Arc<ModelLibrary>,
    pub values: Arc<Vec<StateValueFunction>>,
    pub build_time: Duration,
    pub solve_time: Duration,
}

impl SolvedDomain {
    pub fn spec(&self) -> &DomainSpec {
        &self.instance.spec
    }

    pub fn name(&self) -> String {
        self.instance.spec.kind.to_string()
    }
}

/// Builds the library of `spec` and solves each model, consulting `cache` first.
pub fn prepare(spec: &DomainSpec, cache: Option<&PolicyCache>) -> Result<SolvedDomain> {
    let t0 = Instant::now();
    let instance = domains::build(spec)?;
    let build_time = t0.elapsed();
    let mut solved = solve_instance(instance, cache)?;
    solved.build_time = build_time;
    Ok(solved)
}

/// Solves every model of an already built instance with the instance spec's solver settings.
pub fn solve_instance(instance: DomainInstance, cache: Option<&PolicyCache>) -> Result<SolvedDomain> {
    let t1 = Instant::now();
    let cfg = instance.spec.perseus_config();
    let policies = instance
        .models
        .par_iter()
        .map(|m| match cache {
            Some(c) => c.get_or_solve(m, &cfg),
            None => perseus_solve(m, &cfg),
        })
        .collect::<Result<Vec<AlphaVectorPolicy>>>()?;
    let values = (0..instance.len())
        .into_par_iter()
        .map(|k| value_iteration(&instance.induced_mdp(k), VI_TOLERANCE))
        .collect::<Result<Vec<StateValueFunction>>>()?;
    let library = ModelLibrary::with_uniform_prior(instance.models.clone(), policies)?;
    Ok(SolvedDomain {
        instance,
        library: Arc::new(library),
        values: Arc::new(values),
        build_time: Duration::ZERO,
        solve_time: t1.elapsed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HarnessConfig {
    pub atpo: AtpoConfig,
    pub bopa_mode: MixtureMode,
    /// Record the loss-bound check on ATPO trials.
    pub record_bound: bool,
}

/// Instantiates `kind` for `domain`, refusing agents the domain cannot support.
pub fn make_agent(kind: AgentKind, domain: &SolvedDomain, cfg: &HarnessConfig) -> Result<Box<dyn Agent>> {
    let lib = domain.library.clone();
    Ok(match kind {
        AgentKind::ValueIteration => Box::new(ValueIterationAgent::new(domain.values.clone())),
        AgentKind::Perseus => Box::new(PerseusAgent::new(lib)),
        AgentKind::Atpo => Box::new(AtpoAgent::new(lib, cfg.atpo)),
        AgentKind::RandomPicker => Box::new(RandomPickerAgent::new(lib)),
        AgentKind::Bopa => Box::new(BopaAgent::new(lib, domain.values.clone(), cfg.bopa_mode)?),
        AgentKind::Random => Box::new(RandomAgent::new(lib.num_actions())),
    })
}

/// Agents of `kinds` that can run on `domain`.
pub fn supported_agents(kinds: &[AgentKind], domain: &SolvedDomain) -> Vec<AgentKind> {
    let cfg = HarnessConfig::default();
    kinds
        .iter()
        .copied()
        .filter(|&k| make_agent(k, domain, &cfg).is_ok())
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub domain: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub true_model: usize,
    pub initial_state: usize,
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Undiscounted sum of `rewards`.
    pub total: f64,
    /// `p_0 ..= p_h` for agents that keep a model posterior, else empty.
    pub posterior_trace: Vec<Vec<f64>>,
    /// Per-model evidence at each update (ATPO only).
    pub likelihood_trace: Vec<Vec<f64>>,
    pub bound: Option<BoundReport>,
    pub wall_time: Duration,
}

/// Wall time is not compared.
impl PartialEq for TrialResult {
    fn eq(&self, o: &Self) -> bool {
        self.domain == o.domain
            && self.agent == o.agent
            && self.seed == o.seed
            && self.true_model == o.true_model
            && self.initial_state == o.initial_state
            && self.actions == o.actions
            && self.observations == o.observations
            && self.rewards == o.rewards
            && self.total.to_bits() == o.total.to_bits()
            && self.posterior_trace == o.posterior_trace
            && self.likelihood_trace == o.likelihood_trace
            && self.bound == o.bound
    }
}

impl TrialResult {
    pub fn has_posterior(&self) -> bool {
        !self.posterior_trace.is_empty()
    }

    /// Posterior at step `t`, held at its last value past the end of the episode.
    pub fn posterior_at(&self, t: usize) -> Option<&[f64]> {
        let last = self.posterior_trace.len().checked_sub(1)?;
        Some(&self.posterior_trace[t.min(last)])
    }

    pub fn true_posterior_at(&self, t: usize) -> Option<f64> {
        self.posterior_at(t).map(|p| p[self.true_model])
    }

    /// Whether the true model strictly outweighs every other model at step `t`.
    pub fn identified_at(&self, t: usize) -> Option<bool> {
        self.posterior_at(t).map(|p| strict_argmax(p, self.true_model))
    }

    /// First step at which the true model is the strict posterior argmax.
    pub fn first_identified(&self) -> Option<usize> {
        self.posterior_trace.iter().position(|p| strict_argmax(p, self.true_model))
    }

    pub fn entropy_trace(&self) -> Vec<f64> {
        self.posterior_trace.iter().map(|p| entropy(p)).collect()
    }
}

fn strict_argmax(p: &[f64], k: usize) -> bool {
    p.iter().enumerate().all(|(j, &v)| j == k || p[k] > v)
}

fn rng_pair(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut env = ChaCha8Rng::seed_from_u64(seed);
    env.set_stream(ENV_STREAM);
    let mut agent = ChaCha8Rng::seed_from_u64(seed);
    agent.set_stream(AGENT_STREAM);
    (env, agent)
}

/// Runs one episode of `spec.horizon` steps. Deterministic given `seed`.
pub fn run_trial(domain: &SolvedDomain, kind: AgentKind, seed: u64, cfg: &HarnessConfig) -> Result<TrialResult> {
    let started = Instant::now();
    let mut agent = make_agent(kind, domain, cfg)?;
    let lib = &domain.library;
    let horizon = domain.spec().horizon;
    let (mut env_rng, mut agent_rng) = rng_pair(seed);
    let truth = GroundTruth::sample(&domain.instance, &mut env_rng);
    let env = lib.model(truth.model);
    let caps = kind.capabilities();

    agent.reset(&EpisodeStart {
        true_model: caps.needs_true_model.then_some(truth.model),
        initial_state: caps.needs_full_state.then_some(truth.initial_state),
    })?;

    let mut x = truth.initial_state;
    let mut actions = Vec::with_capacity(horizon);
    let mut observations = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    let mut posterior_trace = Vec::new();
    let mut likelihood_trace = Vec::new();
    let mut bound_steps = Vec::new();
    if let Some(p) = agent.posterior() {
        posterior_trace.push(p.to_vec());
    }

    for _ in 0..horizon {
        if cfg.record_bound {
            if let Some(s) = agent.posterior_state() {
                bound_steps.push(BoundStep {
                    posterior: s.posterior().to_vec(),
                    model_losses: atpo::model_losses(lib, s, truth.model),
                });
            }
        }
        let a = agent.act(&mut agent_rng)?;
        let step = simulate_step(env, x, a, &mut env_rng);
        x = step.next_state;
        agent.observe(&Feedback {
            action: a,
            observation: step.observation,
            next_state: caps.needs_full_state.then_some(x),
        })?;
        actions.push(a);
        observations.push(step.observation);
        rewards.push(step.reward);
        if let Some(p) = agent.posterior() {
            posterior_trace.push(p.to_vec());
        }
        if let Some(s) = agent.posterior_state() {
            likelihood_trace.push(s.likelihoods().to_vec());
        }
    }

    let bound = (cfg.record_bound && agent.posterior_state().is_some()).then(|| {
        let mut q = vec![0.0; lib.len()];
        q[truth.model] = 1.0;
        check_bound(&bound_steps, &q, lib.max_abs_reward(), lib.max_discount())
    });

    Ok(TrialResult {
        domain: domain.name(),
        agent: kind,
        seed,
        true_model: truth.model,
        initial_state: truth.initial_state,
        actions,
        observations,
        total: rewards.iter().sum(),
        rewards,
        posterior_trace,
        likelihood_trace,
        bound,
        wall_time: started.elapsed(),
    })
}

/// Seeds `base, base+1, ..` used by an experiment of `n` trials.
pub fn trial_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Runs `n_trials` seeded trials of every agent in parallel and aggregates them.
pub fn run_experiment(
    domain: &SolvedDomain,
    agents: &[AgentKind],
    n_trials: usize,
    base_seed: u64,
    cfg: &HarnessConfig,
) -> Result<ExperimentReport> {
    for &k in agents {
        make_agent(k, domain, cfg)?;
    }
    let seeds = trial_seeds(base_seed, n_trials);
    let jobs: Vec<(AgentKind, u64)> = agents
        .iter()
        .flat_map(|&k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let trials = jobs
        .par_iter()
        .map(|&(k, s)| run_trial(domain, k, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport::from_trials(
        domain.name(),
        domain.spec().horizon,
        domain.library.len(),
        trials,
    ))
}

/// Normalized ATPO performance for one library size.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub k: usize,
    pub trials: usize,
    pub atpo_mean: f64,
    pub atpo_std: f64,
    pub vi_mean: f64,
    pub random_mean: f64,
    /// Percent of the VI-to-random range; `None` when that range is empty.
    pub normalized: Option<f64>,
}

/// For each `k`, builds the first `k` tasks of `base` and scores ATPO against VI and random.
pub fn run_library_scaling(
    base: &DomainSpec,
    ks: &[usize],
    n_trials: usize,
    base_seed: u64,
    cache: Option<&PolicyCache>,
    cfg: &HarnessConfig,
) -> Result<Vec<ScalingRow>> {
    let agents = [AgentKind::ValueIteration, AgentKind::Random, AgentKind::Atpo];
    ks.iter()
        .map(|&k| {
            if k == 0 {
                return Err(Error::Configuration("library size must be at least 1".into()));
            }
            let mut spec = base.clone();
            spec.library = LibrarySelector::First(k);
            let domain = prepare(&spec, cache)?;
            let report = run_experiment(&domain, &agents, n_trials, base_seed, cfg)?;
            let get = |a| report.summary(a).expect("agent was run");
            let atpo = get(AgentKind::Atpo);
            Ok(ScalingRow {
                k,
                trials: n_trials,
                atpo_mean: atpo.mean_return,
                atpo_std: atpo.std_return,
                vi_mean: get(AgentKind::ValueIteration).mean_return,
                random_mean: get(AgentKind::Random).mean_return,
                normalized: atpo.normalized,
            })
        })
        .collect()
}

/// `100 · (agent − random) / (vi − random)`.
pub fn normalize(agent: f64, vi: f64, random: f64) -> Option<f64> {
    let range = vi - random;
    (range != 0.0).then(|| 100.0 * (agent - random) / range)
}
