//! Online identification of the active task/teammate model and the mixture
//! policy built on top of it.
//!
//! The posterior over models is updated with each model's evidence
//! `λ_k = P(z | b_k, a, m_k)`. The full Bayes rule also multiplies by the
//! probability the mixture assigned to the executed action, but that factor
//! is the same for every `k` and disappears when the posterior is
//! renormalized, so it is never computed.

mod bound;

use rand::Rng;

pub use bound::{check_bound, BoundReport, BoundStep, BOUND_TOLERANCE};

use crate::error::{Error, Result};
use crate::pomdp::belief::{correct, predict};
use crate::pomdp::simulate::sample_probs;
use crate::pomdp::{entropy, Belief, TabularPomdp};
use crate::solvers::{loss, losses, AlphaVectorPolicy};

/// Tolerance for the prior summing to one.
const PRIOR_TOLERANCE: f64 = 1e-9;

/// K hypothesis models with their solved policies and a prior.
#[derive(Debug, Clone)]
pub struct ModelLibrary {
    models: Vec<TabularPomdp>,
    policies: Vec<AlphaVectorPolicy>,
    prior: Vec<f64>,
}

impl ModelLibrary {
    pub fn new(models: Vec<TabularPomdp>, policies: Vec<AlphaVectorPolicy>, prior: Vec<f64>) -> Result<Self> {
        let k = models.len();
        if k == 0 {
            return Err(Error::InvalidLibrary("library is empty".into()));
        }
        if policies.len() != k || prior.len() != k {
            return Err(Error::InvalidLibrary(format!(
                "{k} models but {} policies and {} prior entries",
                policies.len(),
                prior.len()
            )));
        }
        let (na, nz) = (models[0].num_actions(), models[0].num_observations());
        for (i, (m, p)) in models.iter().zip(&policies).enumerate() {
            if m.num_actions() != na || m.num_observations() != nz {
                return Err(Error::InvalidLibrary(format!(
                    "model {i} ({}) has {} actions and {} observations, expected {na} and {nz}",
                    m.label(),
                    m.num_actions(),
                    m.num_observations()
                )));
            }
            if p.num_states() != m.num_states() {
                return Err(Error::InvalidLibrary(format!(
                    "policy {i} covers {} states, model has {}",
                    p.num_states(),
                    m.num_states()
                )));
            }
            if p.vectors().iter().any(|v| v.action >= na) {
                return Err(Error::InvalidLibrary(format!("policy {i} uses an out-of-range action")));
            }
        }
        if prior.iter().any(|&p| !(p >= 0.0)) || (prior.iter().sum::<f64>() - 1.0).abs() > PRIOR_TOLERANCE {
            return Err(Error::InvalidLibrary("prior must be a probability vector".into()));
        }
        Ok(ModelLibrary { models, policies, prior })
    }

    pub fn with_uniform_prior(models: Vec<TabularPomdp>, policies: Vec<AlphaVectorPolicy>) -> Result<Self> {
        let k = models.len().max(1);
        Self::new(models, policies, vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[TabularPomdp] {
        &self.models
    }

    pub fn model(&self, k: usize) -> &TabularPomdp {
        &self.models[k]
    }

    pub fn policies(&self) -> &[AlphaVectorPolicy] {
        &self.policies
    }

    pub fn policy(&self, k: usize) -> &AlphaVectorPolicy {
        &self.policies[k]
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn num_actions(&self) -> usize {
        self.models[0].num_actions()
    }

    pub fn num_observations(&self) -> usize {
        self.models[0].num_observations()
    }

    /// `max |R[x][a]|` over every model.
    pub fn max_abs_reward(&self) -> f64 {
        self.models.iter().map(TabularPomdp::max_abs_reward).fold(0.0, f64::max)
    }

    pub fn max_discount(&self) -> f64 {
        self.models.iter().map(TabularPomdp::discount).fold(0.0, f64::max)
    }

    /// True when every model has the same number of states.
    pub fn shares_state_space(&self) -> bool {
        self.models.iter().all(|m| m.num_states() == self.models[0].num_states())
    }

    /// Library with models (and prior) reordered so that new slot `i` holds old model `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        for &p in perm {
            if p >= self.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidLibrary("not a permutation".into()));
            }
        }
        if perm.len() != self.len() {
            return Err(Error::InvalidLibrary("not a permutation".into()));
        }
        Ok(ModelLibrary {
            models: perm.iter().map(|&i| self.models[i].clone()).collect(),
            policies: perm.iter().map(|&i| self.policies[i].clone()).collect(),
            prior: perm.iter().map(|&i| self.prior[i]).collect(),
        })
    }
}

/// How an action is drawn from the mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MixtureMode {
    #[default]
    Sample,
    /// Most probable action, lowest index among ties.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AtpoConfig {
    pub mode: MixtureMode,
    /// When set, a model whose evidence falls below this value keeps this
    /// value as its evidence instead of being pruned.
    pub likelihood_floor: Option<f64>,
}

/// Posterior over models plus one tracked belief per model.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    posterior: Vec<f64>,
    beliefs: Vec<Belief>,
    active: Vec<bool>,
    likelihoods: Vec<f64>,
    t: usize,
}

impl PosteriorState {
    pub fn new(lib: &ModelLibrary) -> Self {
        PosteriorState {
            posterior: lib.prior().to_vec(),
            beliefs: lib.models().iter().map(|m| m.initial_belief().clone()).collect(),
            active: lib.prior().iter().map(|&p| p > 0.0).collect(),
            likelihoods: vec![1.0; lib.len()],
            t: 0,
        }
    }

    pub fn posterior(&self) -> &[f64] {
        &self.posterior
    }

    pub fn beliefs(&self) -> &[Belief] {
        &self.beliefs
    }

    pub fn belief(&self, k: usize) -> &Belief {
        &self.beliefs[k]
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Evidence of each model at the last update (1 before any update).
    pub fn likelihoods(&self) -> &[f64] {
        &self.likelihoods
    }

    pub fn step(&self) -> usize {
        self.t
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.posterior)
    }

    /// Most probable model, lowest index among ties.
    pub fn map_model(&self) -> usize {
        crate::solvers::value_iteration::argmax_lowest(&self.posterior)
    }
}

/// Greedy action of each model's policy at its tracked belief.
pub fn model_actions(lib: &ModelLibrary, s: &PosteriorState) -> Vec<usize> {
    lib.policies()
        .iter()
        .zip(s.beliefs())
        .map(|(p, b)| p.action(b.probs()))
        .collect()
}

/// `π(a) = Σ_k p(k) [a is model k's greedy action]`.
pub fn mixture(lib: &ModelLibrary, s: &PosteriorState) -> Result<Vec<f64>> {
    if !s.active.iter().any(|&a| a) {
        return Err(Error::AllModelsPruned);
    }
    let mut mix = vec![0.0; lib.num_actions()];
    for (k, a) in model_actions(lib, s).into_iter().enumerate() {
        if s.active[k] {
            mix[a] += s.posterior[k];
        }
    }
    Ok(mix)
}

/// Picks an action from the mixture; returns it with the mixture.
pub fn act<R: Rng + ?Sized>(
    lib: &ModelLibrary,
    s: &PosteriorState,
    mode: MixtureMode,
    rng: &mut R,
) -> Result<(usize, Vec<f64>)> {
    let mix = mixture(lib, s)?;
    let a = match mode {
        MixtureMode::Sample => sample_probs(&mix, rng),
        MixtureMode::Greedy => crate::solvers::value_iteration::argmax_lowest(&mix),
    };
    Ok((a, mix))
}

/// Bayes step on both the model posterior and each model's belief.
pub fn update(lib: &ModelLibrary, s: &PosteriorState, a: usize, z: usize, cfg: &AtpoConfig) -> Result<PosteriorState> {
    let mut next = s.clone();
    update_in_place(lib, &mut next, a, z, cfg)?;
    Ok(next)
}

pub fn update_in_place(lib: &ModelLibrary, s: &mut PosteriorState, a: usize, z: usize, cfg: &AtpoConfig) -> Result<()> {
    crate::error::check_index("action", a, lib.num_actions())?;
    crate::error::check_index("observation", z, lib.num_observations())?;
    for k in 0..lib.len() {
        if !s.active[k] {
            s.likelihoods[k] = 0.0;
            continue;
        }
        let model = lib.model(k);
        // the prediction is shared by the evidence and the belief update
        let mut weights = predict(model, &s.beliefs[k], a);
        let evidence = correct(model, &mut weights, a, z);
        let floored = match cfg.likelihood_floor {
            Some(f) if evidence < f => Some(f),
            _ => None,
        };
        if evidence > 0.0 {
            weights.iter_mut().for_each(|w| *w /= evidence);
            s.beliefs[k] = Belief::from_vec_unchecked(weights);
        } else if floored.is_some() {
            // observation impossible here: keep the prediction without correction
            s.beliefs[k] = Belief::from_vec_unchecked(predict(model, &s.beliefs[k], a));
        }
        let lambda = floored.unwrap_or(evidence);
        s.likelihoods[k] = lambda;
        s.posterior[k] *= lambda;
        if !(s.posterior[k] > 0.0) {
            s.posterior[k] = 0.0;
            s.active[k] = false;
        }
    }
    let total: f64 = s.posterior.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllModelsPruned);
    }
    s.posterior.iter_mut().for_each(|p| *p /= total);
    s.t += 1;
    Ok(())
}

/// `ℓ(a | m*)`, evaluated on the tracked belief of the true model.
pub fn step_loss(lib: &ModelLibrary, s: &PosteriorState, a: usize, true_model: usize) -> f64 {
    loss(lib.model(true_model), lib.policy(true_model), s.belief(true_model), a)
}

/// `ℓ(π̂_k | m*)` for every k: the true-model loss of each model's greedy action.
pub fn model_losses(lib: &ModelLibrary, s: &PosteriorState, true_model: usize) -> Vec<f64> {
    let l = losses(lib.model(true_model), lib.policy(true_model), s.belief(true_model));
    model_actions(lib, s).into_iter().map(|a| l[a]).collect()
}

/// `L(p) = Σ_k p(k) ℓ(π̂_k | m*)`.
pub fn expected_loss(weights: &[f64], model_losses: &[f64]) -> f64 {
    weights.iter().zip(model_losses).map(|(p, l)| p * l).sum()
}

/// One row of the identification trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub action: usize,
    pub observation: usize,
    /// Posterior after the update.
    pub posterior: Vec<f64>,
    pub likelihoods: Vec<f64>,
    pub entropy: f64,
}

impl TraceRecord {
    pub fn after(s: &PosteriorState, action: usize, observation: usize) -> Self {
        TraceRecord {
            t: s.step(),
            action,
            observation,
            posterior: s.posterior().to_vec(),
            likelihoods: s.likelihoods().to_vec(),
            entropy: s.entropy(),
        }
    }
}

#[cfg(test)]
mod tests;
