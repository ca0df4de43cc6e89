//! Alpha-vector policies and their one-step evaluation.
//!
//! Two values are defined for a belief `b`. The raw value is the upper
//! envelope `max_α ⟨α, b⟩`. The lookahead value is `max_a q(b, a)`, where
//! `q` backs the raw value up through one step of the model; losses are taken
//! against the lookahead value so that they are never negative.

use crate::error::{Error, Result};
use crate::pomdp::{Belief, TabularPomdp};

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector {
    pub coeffs: Vec<f64>,
    pub action: usize,
}

impl AlphaVector {
    #[inline]
    pub fn dot(&self, b: &[f64]) -> f64 {
        self.coeffs.iter().zip(b).map(|(a, p)| a * p).sum()
    }

    #[inline]
    pub fn dot_sparse(&self, idx: &[u32], val: &[f64]) -> f64 {
        idx.iter().zip(val).map(|(&i, p)| self.coeffs[i as usize] * p).sum()
    }
}

/// Per-stage statistics of a point-based solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageStats {
    pub backups: usize,
    pub vectors: usize,
    pub max_improvement: f64,
    pub min_improvement: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverMeta {
    pub belief_set_size: usize,
    pub horizon: usize,
    pub tolerance: f64,
    pub max_stages: usize,
    pub seed: u64,
    pub stages: usize,
    /// Largest value improvement over the belief set in the final stage.
    pub residual: f64,
    pub stage_stats: Vec<StageStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVectorPolicy {
    vectors: Vec<AlphaVector>,
    pub model_label: String,
    pub model_hash: String,
    pub meta: SolverMeta,
}

impl AlphaVectorPolicy {
    pub fn new(vectors: Vec<AlphaVector>, model_label: impl Into<String>) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(Error::InvalidModel("policy needs at least one alpha vector".into()));
        };
        let n = first.coeffs.len();
        if vectors.iter().any(|v| v.coeffs.len() != n) {
            return Err(Error::InvalidModel("alpha vectors differ in length".into()));
        }
        Ok(AlphaVectorPolicy {
            vectors,
            model_label: model_label.into(),
            model_hash: String::new(),
            meta: SolverMeta::default(),
        })
    }

    pub(crate) fn push(&mut self, v: AlphaVector) {
        debug_assert_eq!(v.coeffs.len(), self.num_states());
        self.vectors.push(v);
    }

    pub fn vectors(&self) -> &[AlphaVector] {
        &self.vectors
    }

    pub fn num_states(&self) -> usize {
        self.vectors[0].coeffs.len()
    }

    /// Index and value of the maximizing vector; ties go to the lowest action.
    pub fn best(&self, b: &[f64]) -> (usize, f64) {
        let mut best = 0;
        let mut best_v = self.vectors[0].dot(b);
        for (i, v) in self.vectors.iter().enumerate().skip(1) {
            let val = v.dot(b);
            let eps = TIE_EPS * best_v.abs().max(1.0);
            if val > best_v + eps || (val >= best_v - eps && v.action < self.vectors[best].action) {
                best = i;
                best_v = val;
            }
        }
        (best, best_v)
    }

    /// Raw value `max_α ⟨α, b⟩`.
    pub fn value(&self, b: &[f64]) -> f64 {
        self.best(b).1
    }

    /// Action of the maximizing vector.
    pub fn action(&self, b: &[f64]) -> usize {
        self.vectors[self.best(b).0].action
    }

    /// `max_α Σ w(y) α(y)` over a sparse unnormalized weight vector.
    pub(crate) fn envelope_sparse(&self, entries: &[(u32, f64)]) -> (usize, f64) {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, v) in self.vectors.iter().enumerate() {
            let val: f64 = entries.iter().map(|&(y, w)| w * v.coeffs[y as usize]).sum();
            if val > best_v {
                best = i;
                best_v = val;
            }
        }
        (best, best_v)
    }
}

pub fn policy_value(policy: &AlphaVectorPolicy, b: &Belief) -> f64 {
    policy.value(b.probs())
}

pub fn policy_action(policy: &AlphaVectorPolicy, b: &Belief) -> usize {
    policy.action(b.probs())
}

/// Predicted successor mass split by observation: for every `z`, the sparse
/// vector `y -> Σ_x b(x) T[a][x][y] O[a][y][z]`.
pub(crate) struct ObservationSplit {
    predicted: Vec<f64>,
    touched: Vec<usize>,
    pub buckets: Vec<Vec<(u32, f64)>>,
}

impl ObservationSplit {
    pub fn new(num_states: usize, num_observations: usize) -> Self {
        ObservationSplit {
            predicted: vec![0.0; num_states],
            touched: Vec::new(),
            buckets: vec![Vec::new(); num_observations],
        }
    }

    pub fn compute<I>(&mut self, model: &TabularPomdp, belief: I, action: usize)
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        for &y in &self.touched {
            self.predicted[y] = 0.0;
        }
        self.touched.clear();
        for bucket in &mut self.buckets {
            bucket.clear();
        }
        for (x, bx) in belief {
            for (y, p) in model.transition_row(action, x).iter() {
                if self.predicted[y] == 0.0 {
                    self.touched.push(y);
                }
                self.predicted[y] += bx * p;
            }
        }
        self.touched.sort_unstable();
        for &y in &self.touched {
            let py = self.predicted[y];
            if py == 0.0 {
                continue;
            }
            for (z, o) in model.observation_row(action, y).iter() {
                self.buckets[z].push((y as u32, py * o));
            }
        }
    }
}

fn check_shapes(model: &TabularPomdp, policy: &AlphaVectorPolicy, b: &Belief) {
    assert_eq!(policy.num_states(), model.num_states(), "policy does not match model");
    assert_eq!(b.len(), model.num_states(), "belief does not match model");
}

fn q_with(model: &TabularPomdp, policy: &AlphaVectorPolicy, b: &Belief, a: usize, split: &mut ObservationSplit) -> f64 {
    let immediate: f64 = b.support().map(|(x, p)| p * model.reward(x, a)).sum();
    split.compute(model, b.support(), a);
    // V is positively homogeneous, so ρ_z·V(b_z) is the envelope of the unnormalized split
    let future: f64 = split
        .buckets
        .iter()
        .filter(|bk| !bk.is_empty())
        .map(|bk| policy.envelope_sparse(bk).1)
        .sum();
    immediate + model.discount() * future
}

/// One-step lookahead `q(b, a)` through the model.
pub fn policy_q(model: &TabularPomdp, policy: &AlphaVectorPolicy, b: &Belief, a: usize) -> f64 {
    check_shapes(model, policy, b);
    let mut split = ObservationSplit::new(model.num_states(), model.num_observations());
    q_with(model, policy, b, a, &mut split)
}

pub fn q_values(model: &TabularPomdp, policy: &AlphaVectorPolicy, b: &Belief) -> Vec<f64> {
    check_shapes(model, policy, b);
    let mut split = ObservationSplit::new(model.num_states(), model.num_observations());
    (0..model.num_actions())
        .map(|a| q_with(model, policy, b, a, &mut split))
        .collect()
}

/// `max_a q(b, a)`.
pub fn lookahead_value(model: &TabularPomdp, policy: &AlphaVectorPolicy, b: &Belief) -> f64 {
    q_values(model, policy, b).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Action maximizing the lookahead, lowest index among ties.
pub fn lookahead_action(model: &TabularPomdp, policy: &AlphaVectorPolicy, b: &Belief) -> usize {
    super::value_iteration::argmax_lowest(&q_values(model, policy, b))
}

/// Loss of every action: `max_a' q(b, a') − q(b, a)`, clamped at zero.
pub fn losses(model: &TabularPomdp, policy: &AlphaVectorPolicy, b: &Belief) -> Vec<f64> {
    let q = q_values(model, policy, b);
    let v = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    q.into_iter().map(|qa| (v - qa).max(0.0)).collect()
}

pub fn loss(model: &TabularPomdp, policy: &AlphaVectorPolicy, b: &Belief, a: usize) -> f64 {
    losses(model, policy, b)[a]
}
