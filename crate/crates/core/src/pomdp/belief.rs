use crate::error::{check_index, Error, Result};

use super::model::TabularPomdp;

/// Tolerance used for every stochasticity check.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// Probability distribution over one model's states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    /// Wraps a probability vector after checking it is a distribution.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidBelief("empty belief".into()));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0)) {
            return Err(Error::InvalidBelief(format!("entry {i} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::InvalidBelief(format!("mass {total} != 1")));
        }
        Ok(Belief { probs })
    }

    /// Normalizes non-negative weights into a belief.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidBelief("weights have no mass".into()));
        }
        Ok(Belief {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        Belief { probs }
    }

    pub fn uniform(n: usize) -> Self {
        Belief {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point(n: usize, state: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[state] = 1.0;
        Belief { probs }
    }

    /// Uniform over the listed states.
    pub fn uniform_over(n: usize, states: &[usize]) -> Result<Self> {
        let mut w = vec![0.0; n];
        for &s in states {
            check_index("state", s, n)?;
            w[s] = 1.0;
        }
        Self::from_weights(w)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, &p)| (i, p))
    }

    pub fn l1_distance(&self, other: &Belief) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.probs.iter().zip(v).map(|(p, c)| p * c).sum()
    }
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Alternating record of ad hoc actions and the observations that followed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    steps: Vec<(usize, usize)>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, action: usize, observation: usize) {
        self.steps.push((action, observation));
    }

    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl FromIterator<(usize, usize)> for History {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        History {
            steps: iter.into_iter().collect(),
        }
    }
}

/// Result of one filtering step.
#[derive(Debug, Clone)]
pub struct BeliefUpdate {
    pub belief: Belief,
    /// `P(z | b, a)`, the mass before normalization.
    pub likelihood: f64,
}

/// One-step prediction `y -> sum_x b(x) T[a][x][y]`.
pub fn predict(model: &TabularPomdp, belief: &Belief, action: usize) -> Vec<f64> {
    let mut next = vec![0.0; model.num_states()];
    for (x, bx) in belief.support() {
        for (y, p) in model.transition_row(action, x).iter() {
            next[y] += bx * p;
        }
    }
    next
}

/// Weights a predicted state distribution by the observation likelihood,
/// in place, returning the total mass.
pub fn correct(model: &TabularPomdp, predicted: &mut [f64], action: usize, observation: usize) -> f64 {
    let mut mass = 0.0;
    for (y, w) in predicted.iter_mut().enumerate() {
        if *w != 0.0 {
            *w *= model.observation_prob(action, y, observation);
            mass += *w;
        }
    }
    mass
}

/// Bayes filter step `b'(y) ∝ sum_x b(x) T[a][x][y] O[a][y][z]`.
pub fn belief_update(
    model: &TabularPomdp,
    belief: &Belief,
    action: usize,
    observation: usize,
) -> Result<BeliefUpdate> {
    check_index("action", action, model.num_actions())?;
    check_index("observation", observation, model.num_observations())?;
    if belief.len() != model.num_states() {
        return Err(Error::InvalidBelief(format!(
            "belief has {} entries, model has {} states",
            belief.len(),
            model.num_states()
        )));
    }
    let mut next = predict(model, belief, action);
    let likelihood = correct(model, &mut next, action, observation);
    normalize_posterior(next, likelihood, action, observation)
}

pub(crate) fn normalize_posterior(
    mut weights: Vec<f64>,
    likelihood: f64,
    action: usize,
    observation: usize,
) -> Result<BeliefUpdate> {
    if !(likelihood > 0.0) {
        return Err(Error::ZeroLikelihood {
            action,
            observation,
        });
    }
    for w in &mut weights {
        *w /= likelihood;
    }
    Ok(BeliefUpdate {
        belief: Belief::from_vec_unchecked(weights),
        likelihood,
    })
}
