//! The agents that can fill the ad hoc role, behind one interface.
//!
//! An episode runs `reset`, then alternates `act` and `observe`. What an
//! agent is told beyond its own action and observation depends on its
//! [`Capabilities`]: the true state only to agents that need it, the
//! identity of the active model only to agents that need it.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::atpo::{self, AtpoConfig, MixtureMode, ModelLibrary, PosteriorState};
use crate::error::{Error, Result};
use crate::pomdp::belief::{correct, predict};
use crate::pomdp::simulate::sample_probs;
use crate::pomdp::{belief_update, Belief};
use crate::solvers::value_iteration::argmax_lowest;
use crate::solvers::StateValueFunction;


#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    pub needs_full_state: bool,
    pub needs_true_model: bool,
}

/// What the harness reveals at the start of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EpisodeStart {
    pub true_model: Option<usize>,
    pub initial_state: Option<usize>,
}

/// What the harness reveals after each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feedback {
    pub action: usize,
    pub observation: usize,
    pub next_state: Option<usize>,
}

pub trait Agent: Send {
    fn kind(&self) -> AgentKind;
    fn capabilities(&self) -> Capabilities;
    fn reset(&mut self, start: &EpisodeStart) -> Result<()>;
    fn act(&mut self, rng: &mut dyn RngCore) -> Result<usize>;
    fn observe(&mut self, feedback: &Feedback) -> Result<()>;

    /// Current distribution over library models, for agents that keep one.
    fn posterior(&self) -> Option<&[f64]> {
        None
    }

    /// Full identification state, for the ATPO agent.
    fn posterior_state(&self) -> Option<&PosteriorState> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentKind {
    ValueIteration,
    Perseus,
    Atpo,
    RandomPicker,
    Bopa,
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        AgentKind::ValueIteration,
        AgentKind::Perseus,
        AgentKind::Atpo,
        AgentKind::RandomPicker,
        AgentKind::Bopa,
        AgentKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::ValueIteration => "vi",
            AgentKind::Perseus => "perseus",
            AgentKind::Atpo => "atpo",
            AgentKind::RandomPicker => "random-picker",
            AgentKind::Bopa => "bopa",
            AgentKind::Random => "random",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Configuration(format!("unknown agent `{name}`")))
    }

    pub fn capabilities(self) -> Capabilities {
        match self {
            AgentKind::ValueIteration => Capabilities {
                needs_full_state: true,
                needs_true_model: true,
            },
            AgentKind::Perseus => Capabilities {
                needs_full_state: false,
                needs_true_model: true,
            },
            AgentKind::Bopa => Capabilities {
                needs_full_state: true,
                needs_true_model: false,
            },
            AgentKind::Atpo | AgentKind::RandomPicker | AgentKind::Random => Capabilities::default(),
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn require<T>(value: Option<T>, what: &str, agent: AgentKind) -> Result<T> {
    value.ok_or_else(|| Error::Configuration(format!("{agent} agent was not given the {what}")))
}

fn require_model(start: &EpisodeStart, count: usize, agent: AgentKind) -> Result<usize> {
    let k = require(start.true_model, "true model", agent)?;
    crate::error::check_index("model", k, count)?;
    Ok(k)
}

/// Knows the active model and sees the state; plays the optimal action of
/// the single-agent MDP with the teammate folded in.
#[derive(Debug, Clone)]
pub struct ValueIterationAgent {
    values: Arc<Vec<StateValueFunction>>,
    model: usize,
    state: Option<usize>,
}

impl ValueIterationAgent {
    /// `values[k]` solves the induced MDP of library model `k`.
    pub fn new(values: Arc<Vec<StateValueFunction>>) -> Self {
        ValueIterationAgent {
            values,
            model: 0,
            state: None,
        }
    }
}

impl Agent for ValueIterationAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::ValueIteration
    }

    fn capabilities(&self) -> Capabilities {
        self.kind().capabilities()
    }

    fn reset(&mut self, start: &EpisodeStart) -> Result<()> {
        self.model = require_model(start, self.values.len(), self.kind())?;
        self.state = Some(require(start.initial_state, "initial state", self.kind())?);
        Ok(())
    }

    fn act(&mut self, _rng: &mut dyn RngCore) -> Result<usize> {
        let x = require(self.state, "state", self.kind())?;
        Ok(self.values[self.model].greedy_action(x))
    }

    fn observe(&mut self, feedback: &Feedback) -> Result<()> {
        self.state = Some(require(feedback.next_state, "state", self.kind())?);
        Ok(())
    }
}

/// Knows the active model but not the state; filters one belief and plays
/// that model's point-based policy.
#[derive(Debug, Clone)]
pub struct PerseusAgent {
    lib: Arc<ModelLibrary>,
    model: usize,
    belief: Option<Belief>,
}

impl PerseusAgent {
    pub fn new(lib: Arc<ModelLibrary>) -> Self {
        PerseusAgent {
            lib,
            model: 0,
            belief: None,
        }
    }

    pub fn belief(&self) -> Option<&Belief> {
        self.belief.as_ref()
    }
}

impl Agent for PerseusAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Perseus
    }

    fn capabilities(&self) -> Capabilities {
        self.kind().capabilities()
    }

    fn reset(&mut self, start: &EpisodeStart) -> Result<()> {
        self.model = require_model(start, self.lib.len(), self.kind())?;
        self.belief = Some(self.lib.model(self.model).initial_belief().clone());
        Ok(())
    }

    fn act(&mut self, _rng: &mut dyn RngCore) -> Result<usize> {
        let b = require(self.belief.as_ref(), "initial belief", self.kind())?;
        Ok(self.lib.policy(self.model).action(b.probs()))
    }

    fn observe(&mut self, feedback: &Feedback) -> Result<()> {
        let b = require(self.belief.as_ref(), "initial belief", self.kind())?;
        let up = belief_update(self.lib.model(self.model), b, feedback.action, feedback.observation)?;
        self.belief = Some(up.belief);
        Ok(())
    }
}

/// Identifies the model online from observations alone.
#[derive(Debug, Clone)]
pub struct AtpoAgent {
    lib: Arc<ModelLibrary>,
    cfg: AtpoConfig,
    state: PosteriorState,
}

impl AtpoAgent {
    pub fn new(lib: Arc<ModelLibrary>, cfg: AtpoConfig) -> Self {
        let state = PosteriorState::new(&lib);
        AtpoAgent { lib, cfg, state }
    }

    pub fn library(&self) -> &ModelLibrary {
        &self.lib
    }
}

impl Agent for AtpoAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Atpo
    }

    fn capabilities(&self) -> Capabilities {
        self.kind().capabilities()
    }

    fn reset(&mut self, _start: &EpisodeStart) -> Result<()> {
        self.state = PosteriorState::new(&self.lib);
        Ok(())
    }

    fn act(&mut self, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(atpo::act(&self.lib, &self.state, self.cfg.mode, rng)?.0)
    }

    fn observe(&mut self, feedback: &Feedback) -> Result<()> {
        atpo::update_in_place(&self.lib, &mut self.state, feedback.action, feedback.observation, &self.cfg)
    }

    fn posterior(&self) -> Option<&[f64]> {
        Some(self.state.posterior())
    }

    fn posterior_state(&self) -> Option<&PosteriorState> {
        Some(&self.state)
    }
}

/// Tracks every model's belief but ignores the evidence: each step it
/// follows the policy of a model drawn uniformly.
#[derive(Debug, Clone)]
pub struct RandomPickerAgent {
    lib: Arc<ModelLibrary>,
    beliefs: Vec<Belief>,
    last_pick: Option<usize>,
}

impl RandomPickerAgent {
    pub fn new(lib: Arc<ModelLibrary>) -> Self {
        let beliefs = lib.models().iter().map(|m| m.initial_belief().clone()).collect();
        RandomPickerAgent {
            lib,
            beliefs,
            last_pick: None,
        }
    }

    pub fn beliefs(&self) -> &[Belief] {
        &self.beliefs
    }

    pub fn last_pick(&self) -> Option<usize> {
        self.last_pick
    }
}

impl Agent for RandomPickerAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::RandomPicker
    }

    fn capabilities(&self) -> Capabilities {
        self.kind().capabilities()
    }

    fn reset(&mut self, _start: &EpisodeStart) -> Result<()> {
        self.beliefs = self.lib.models().iter().map(|m| m.initial_belief().clone()).collect();
        self.last_pick = None;
        Ok(())
    }

    fn act(&mut self, rng: &mut dyn RngCore) -> Result<usize> {
        let k = rng.gen_range(0..self.lib.len());
        self.last_pick = Some(k);
        Ok(self.lib.policy(k).action(self.beliefs[k].probs()))
    }

    fn observe(&mut self, feedback: &Feedback) -> Result<()> {
        let (a, z) = (feedback.action, feedback.observation);
        crate::error::check_index("action", a, self.lib.num_actions())?;
        crate::error::check_index("observation", z, self.lib.num_observations())?;
        for (k, b) in self.beliefs.iter_mut().enumerate() {
            let model = self.lib.model(k);
            let mut w = predict(model, b, a);
            let mass = correct(model, &mut w, a, z);
            *b = if mass > 0.0 {
                w.iter_mut().for_each(|v| *v /= mass);
                Belief::from_vec_unchecked(w)
            } else {
                // the observation rules this model out; keep its prediction
                Belief::from_vec_unchecked(predict(model, b, a))
            };
        }
        Ok(())
    }
}

/// Sees the state and identifies the model from state transitions; acts
/// by a posterior mixture of each model's optimal MDP policy.
#[derive(Debug, Clone)]
pub struct BopaAgent {
    lib: Arc<ModelLibrary>,
    values: Arc<Vec<StateValueFunction>>,
    mode: MixtureMode,
    posterior: Vec<f64>,
    state: Option<usize>,
}

impl BopaAgent {
    /// Fails when the library's models do not share one state space.
    pub fn new(lib: Arc<ModelLibrary>, values: Arc<Vec<StateValueFunction>>, mode: MixtureMode) -> Result<Self> {
        if !lib.shares_state_space() {
            return Err(Error::Configuration(
                "bopa needs every library model to share one state space".into(),
            ));
        }
        if values.len() != lib.len() {
            return Err(Error::Configuration(format!(
                "bopa got {} value functions for {} models",
                values.len(),
                lib.len()
            )));
        }
        let posterior = lib.prior().to_vec();
        Ok(BopaAgent {
            lib,
            values,
            mode,
            posterior,
            state: None,
        })
    }
}

impl Agent for BopaAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Bopa
    }

    fn capabilities(&self) -> Capabilities {
        self.kind().capabilities()
    }

    fn reset(&mut self, start: &EpisodeStart) -> Result<()> {
        self.state = Some(require(start.initial_state, "initial state", self.kind())?);
        self.posterior = self.lib.prior().to_vec();
        Ok(())
    }

    fn act(&mut self, rng: &mut dyn RngCore) -> Result<usize> {
        let x = require(self.state, "state", self.kind())?;
        let mut mix = vec![0.0; self.lib.num_actions()];
        for (v, p) in self.values.iter().zip(&self.posterior) {
            mix[v.greedy_action(x)] += p;
        }
        Ok(match self.mode {
            MixtureMode::Sample => sample_probs(&mix, rng),
            MixtureMode::Greedy => argmax_lowest(&mix),
        })
    }

    fn observe(&mut self, feedback: &Feedback) -> Result<()> {
        let x = require(self.state, "state", self.kind())?;
        let y = require(feedback.next_state, "state", self.kind())?;
        for (k, p) in self.posterior.iter_mut().enumerate() {
            *p *= self.lib.model(k).transition_prob(feedback.action, x, y);
        }
        let total: f64 = self.posterior.iter().sum();
        if !(total > 0.0) {
            return Err(Error::AllModelsPruned);
        }
        self.posterior.iter_mut().for_each(|p| *p /= total);
        self.state = Some(y);
        Ok(())
    }

    fn posterior(&self) -> Option<&[f64]> {
        Some(&self.posterior)
    }
}

/// Uniformly random actions.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    num_actions: usize,
}

impl RandomAgent {
    pub fn new(num_actions: usize) -> Self {
        RandomAgent {
            num_actions: num_actions.max(1),
        }
    }
}

impl Agent for RandomAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Random
    }

    fn capabilities(&self) -> Capabilities {
        self.kind().capabilities()
    }

    fn reset(&mut self, _start: &EpisodeStart) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(rng.gen_range(0..self.num_actions))
    }

    fn observe(&mut self, _feedback: &Feedback) -> Result<()> {
        Ok(())
    }
}
