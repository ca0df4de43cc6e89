//! Benchmark domains compiled into libraries of tabular POMDPs.
//!
//! Each domain describes its dynamics through [`Dynamics`], which
//! enumerates outcome distributions, and separately through a scripted
//! simulator that samples the same process step by step with explicit
//! noise. The two are cross-checked in tests.

pub mod grid;
pub mod maps;
pub mod overcooked;
pub mod power_plant;
pub mod pursuit;
pub mod spec;

use rand::Rng;

pub use spec::{DomainKind, DomainSpec, LibrarySelector, PursuitVariant};

use crate::error::{Error, Result};
use crate::pomdp::{PomdpBuilder, Storage, TabularMmdp, TabularPomdp};

pub const DISCOUNT: f64 = 0.95;
pub const STEP_REWARD: f64 = -1.0;
pub const GOAL_REWARD: f64 = 100.0;

/// Outcome distributions of one hypothesis model.
pub trait Dynamics: Sync {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn num_observations(&self) -> usize;
    /// Successor distribution of `(x, a)`, appended to `out`.
    fn transition(&self, x: usize, a: usize, out: &mut Vec<(usize, f64)>);
    /// Observation distribution on arriving in `y` after `a`, appended to `out`.
    fn observation(&self, a: usize, y: usize, out: &mut Vec<(usize, f64)>);
    fn reward(&self, x: usize, a: usize) -> f64;
    fn initial_belief(&self) -> Vec<f64>;
    fn label(&self) -> String;
}

/// Step-by-step sampler of the same process, written against the domain's
/// own state representation rather than the outcome tables.
pub trait Simulator {
    fn sample(&self, x: usize, a: usize, rng: &mut dyn rand::RngCore) -> (usize, usize);
}

pub fn compile(d: &dyn Dynamics, discount: f64) -> Result<TabularPomdp> {
    let (ns, na) = (d.num_states(), d.num_actions());
    let mut b = PomdpBuilder::new(ns, na, d.num_observations());
    let mut buf = Vec::new();
    for a in 0..na {
        for x in 0..ns {
            buf.clear();
            d.transition(x, a, &mut buf);
            for &(y, p) in &buf {
                b.transition(a, x, y, p);
            }
            buf.clear();
            d.observation(a, x, &mut buf);
            for &(z, p) in &buf {
                b.observation(a, x, z, p);
            }
            b.reward(x, a, d.reward(x, a));
        }
    }
    b.discount(discount)
        .initial_belief(d.initial_belief())
        .label(d.label())
        .storage(Storage::default())
        .build()
}

/// Appends `(index, p)` unless `p` is zero, merging with an equal index.
pub(crate) fn push_outcome(out: &mut Vec<(usize, f64)>, index: usize, p: f64) {
    if p == 0.0 {
        return;
    }
    match out.iter_mut().find(|e| e.0 == index) {
        Some(e) => e.1 += p,
        None => out.push((index, p)),
    }
}

pub(crate) fn uniform_over(n: usize, states: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut v = vec![0.0; n];
    let chosen: Vec<usize> = states.collect();
    for &s in &chosen {
        v[s] = 1.0 / chosen.len() as f64;
    }
    v
}

/// A compiled library of hypothesis models for one domain.
#[derive(Debug, Clone)]
pub struct DomainInstance {
    pub spec: DomainSpec,
    pub models: Vec<TabularPomdp>,
}

impl DomainInstance {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn shares_state_space(&self) -> bool {
        self.models.iter().all(|m| m.num_states() == self.models[0].num_states())
    }

    /// Fully observable single-agent MDP of model `k` (teammate folded in).
    pub fn induced_mdp(&self, k: usize) -> TabularMmdp {
        TabularMmdp::from_pomdp(&self.models[k])
    }
}

/// The hypothesis in force during one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruth {
    pub model: usize,
    pub initial_state: usize,
}

impl GroundTruth {
    /// Draws the active model uniformly and a start state from its initial belief.
    pub fn sample<R: Rng + ?Sized>(instance: &DomainInstance, rng: &mut R) -> Self {
        let model = rng.gen_range(0..instance.len());
        let initial_state = crate::pomdp::simulate::sample_probs(instance.models[model].initial_belief().probs(), rng);
        GroundTruth { model, initial_state }
    }
}

/// Builds every model selected by `spec`.
pub fn build(spec: &DomainSpec) -> Result<DomainInstance> {
    spec.check()?;
    let dynamics: Vec<Box<dyn Dynamics>> = match &spec.kind {
        DomainKind::Gridworld => grid::gridworld_library(spec)?,
        DomainKind::Map(name) => grid::map_library(name, spec)?,
        DomainKind::Pursuit(variant) => pursuit::library(*variant, spec)?,
        DomainKind::PowerPlant => power_plant::library(spec)?,
        DomainKind::Overcooked => overcooked::library(spec)?,
    };
    if dynamics.is_empty() {
        return Err(Error::InvalidDomain("library selection is empty".into()));
    }
    let models = dynamics
        .iter()
        .map(|d| compile(d.as_ref(), DISCOUNT))
        .collect::<Result<Vec<_>>>()?;
    Ok(DomainInstance {
        spec: spec.clone(),
        models,
    })
}
