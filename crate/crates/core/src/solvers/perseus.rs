//! Randomized point-based value iteration over a sampled belief set.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::alpha::{AlphaVector, AlphaVectorPolicy, ObservationSplit, SolverMeta, StageStats};
use crate::error::{Error, Result};
use crate::pomdp::simulate::{sample_probs, simulate_step};
use crate::pomdp::{belief_update, Belief, TabularPomdp};

pub const DEFAULT_MAX_STAGES: usize = 500;

/// Beliefs closer than this in L1 count as duplicates.
pub const DEDUP_DISTANCE: f64 = 1e-9;

const PARALLEL_BELIEFS: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct PerseusConfig {
    pub belief_set_size: usize,
    /// Episode length for belief collection.
    pub horizon: usize,
    pub tolerance: f64,
    pub max_stages: usize,
    pub seed: u64,
}

impl PerseusConfig {
    pub fn new(belief_set_size: usize, horizon: usize, tolerance: f64, seed: u64) -> Self {
        PerseusConfig {
            belief_set_size,
            horizon,
            tolerance,
            max_stages: DEFAULT_MAX_STAGES,
            seed,
        }
    }

    /// Stable textual form, used in policy files and cache keys.
    pub fn settings_string(&self) -> String {
        format!(
            "beliefs={} horizon={} tolerance={} max_stages={} seed={}",
            self.belief_set_size, self.horizon, self.tolerance, self.max_stages, self.seed
        )
    }
}

/// A belief kept as its support only.
#[derive(Debug, Clone)]
pub(crate) struct SparseBelief {
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl SparseBelief {
    fn from_belief(b: &Belief) -> Self {
        let (idx, val) = b.support().map(|(x, p)| (x as u32, p)).unzip();
        SparseBelief { idx, val }
    }

    fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().zip(&self.val).map(|(&i, &p)| (i as usize, p))
    }
}

/// Near-duplicate index keyed by a random linear projection; two beliefs
/// within L1 distance `d` project within `d` of each other.
struct DedupIndex {
    weights: Vec<f64>,
    keys: BTreeMap<u64, Vec<usize>>,
}

impl DedupIndex {
    fn new(n: usize, rng: &mut impl Rng) -> Self {
        DedupIndex {
            weights: (0..n).map(|_| rng.gen::<f64>()).collect(),
            keys: BTreeMap::new(),
        }
    }

    fn project(&self, b: &Belief) -> f64 {
        b.support().map(|(x, p)| self.weights[x] * p).sum()
    }

    // projections are non-negative, so their bit patterns sort like the values
    fn contains(&self, b: &Belief, stored: &[Belief]) -> bool {
        let f = self.project(b);
        let lo = (f - DEDUP_DISTANCE).max(0.0).to_bits();
        let hi = (f + DEDUP_DISTANCE).to_bits();
        self.keys
            .range(lo..=hi)
            .flat_map(|(_, v)| v)
            .any(|&i| stored[i].l1_distance(b) <= DEDUP_DISTANCE)
    }

    fn insert(&mut self, b: &Belief, index: usize) {
        self.keys.entry(self.project(b).to_bits()).or_default().push(index);
    }
}

/// Collects up to `size` distinct beliefs reachable from the initial belief
/// under uniformly random actions, in episodes of `horizon` steps.
///
/// Stops early when the reachable set appears exhausted.
pub fn collect_beliefs(model: &TabularPomdp, size: usize, horizon: usize, rng: &mut impl Rng) -> Vec<Belief> {
    let b0 = model.initial_belief().clone();
    let mut index = DedupIndex::new(model.num_states(), rng);
    let mut out = Vec::with_capacity(size);
    index.insert(&b0, 0);
    out.push(b0);
    let patience = 10_000 + 10 * size;
    let mut idle = 0;
    let horizon = horizon.max(1);
    while out.len() < size && idle < patience {
        let mut b = model.initial_belief().clone();
        let mut x = sample_probs(b.probs(), rng);
        for _ in 0..horizon {
            let a = rng.gen_range(0..model.num_actions());
            let step = simulate_step(model, x, a, rng);
            x = step.next_state;
            let Ok(up) = belief_update(model, &b, a, step.observation) else { break };
            b = up.belief;
            if index.contains(&b, &out) {
                idle += 1;
            } else {
                idle = 0;
                index.insert(&b, out.len());
                out.push(b.clone());
                if out.len() >= size {
                    break;
                }
            }
            if idle >= patience {
                break;
            }
        }
    }
    out
}

struct Backup {
    split: ObservationSplit,
    weights: Vec<f64>,
}

impl Backup {
    /// Point backup at `b`: the best one-step lookahead vector over `vectors`.
    fn run(&mut self, model: &TabularPomdp, policy: &AlphaVectorPolicy, b: &SparseBelief, fallback: usize) -> AlphaVector {
        let gamma = model.discount();
        let nz = model.num_observations();
        let mut best_value = f64::NEG_INFINITY;
        let mut best_action = 0;
        let mut best_choice = vec![fallback; nz];
        let mut choice = vec![fallback; nz];
        for a in 0..model.num_actions() {
            let mut value: f64 = b.iter().map(|(x, p)| p * model.reward(x, a)).sum();
            self.split.compute(model, b.iter(), a);
            choice.iter_mut().for_each(|c| *c = fallback);
            for (z, bucket) in self.split.buckets.iter().enumerate() {
                if !bucket.is_empty() {
                    let (i, v) = policy.envelope_sparse(bucket);
                    choice[z] = i;
                    value += gamma * v;
                }
            }
            if a == 0 || value > best_value + 1e-12 * best_value.abs().max(1.0) {
                best_value = value;
                best_action = a;
                best_choice.copy_from_slice(&choice);
            }
        }
        let a = best_action;
        let vectors = policy.vectors();
        for (y, w) in self.weights.iter_mut().enumerate() {
            *w = model
                .observation_row(a, y)
                .iter()
                .map(|(z, o)| o * vectors[best_choice[z]].coeffs[y])
                .sum();
        }
        let coeffs = (0..model.num_states())
            .map(|x| {
                let future: f64 = model.transition_row(a, x).iter().map(|(y, p)| p * self.weights[y]).sum();
                model.reward(x, a) + gamma * future
            })
            .collect();
        AlphaVector { coeffs, action: a }
    }
}

fn dot(v: &AlphaVector, b: &SparseBelief) -> f64 {
    v.dot_sparse(&b.idx, &b.val)
}

fn best_at(vectors: &[AlphaVector], b: &SparseBelief) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in vectors.iter().enumerate() {
        let d = dot(v, b);
        if d > best.1 {
            best = (i, d);
        }
    }
    best
}

fn raise_values(values: &mut [f64], beliefs: &[SparseBelief], v: &AlphaVector) {
    let raise = |(val, b): (&mut f64, &SparseBelief)| {
        let d = dot(v, b);
        if d > *val {
            *val = d;
        }
    };
    if beliefs.len() >= PARALLEL_BELIEFS {
        values.par_iter_mut().zip(beliefs.par_iter()).for_each(raise);
    } else {
        values.iter_mut().zip(beliefs.iter()).for_each(raise);
    }
}

fn residual_gain(alpha: &AlphaVector, b: &SparseBelief, value: f64) -> f64 {
    dot(alpha, b) - value
}

/// Backs up every belief; returns those whose backup beats the current value
/// as `(index, gain, vector)`.
fn full_backup(
    model: &TabularPomdp,
    policy: &AlphaVectorPolicy,
    beliefs: &[SparseBelief],
    values: &[f64],
) -> Vec<(usize, f64, AlphaVector)> {
    let scratch = || Backup {
        split: ObservationSplit::new(model.num_states(), model.num_observations()),
        weights: vec![0.0; model.num_states()],
    };
    let run = |backup: &mut Backup, i: usize| {
        let b = &beliefs[i];
        let alpha = backup.run(model, policy, b, best_at(policy.vectors(), b).0);
        let gain = residual_gain(&alpha, b, values[i]);
        (gain > 0.0).then_some((i, gain, alpha))
    };
    (0..beliefs.len())
        .into_par_iter()
        .map_init(scratch, run)
        .flatten()
        .collect()
}

/// Solves `model` with randomized point-based backups over a belief set
/// gathered by random rollouts.
pub fn perseus_solve(model: &TabularPomdp, cfg: &PerseusConfig) -> Result<AlphaVectorPolicy> {
    if cfg.belief_set_size == 0 {
        return Err(Error::Configuration("belief set size must be at least 1".into()));
    }
    if !(cfg.tolerance > 0.0) {
        return Err(Error::Configuration("tolerance must be positive".into()));
    }
    let gamma = model.discount();
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Configuration(format!("discount {gamma} must lie in [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let beliefs: Vec<SparseBelief> = collect_beliefs(model, cfg.belief_set_size, cfg.horizon, &mut rng)
        .iter()
        .map(SparseBelief::from_belief)
        .collect();
    log::debug!("{}: collected {} beliefs", model.label(), beliefs.len());

    let min_reward = model.rewards().iter().cloned().fold(f64::INFINITY, f64::min);
    let init = AlphaVector {
        coeffs: vec![min_reward / (1.0 - gamma); model.num_states()],
        action: 0,
    };
    let mut policy = AlphaVectorPolicy::new(vec![init], model.label())?;
    let mut values: Vec<f64> = beliefs.iter().map(|b| best_at(policy.vectors(), b).1).collect();
    let mut backup = Backup {
        split: ObservationSplit::new(model.num_states(), model.num_observations()),
        weights: vec![0.0; model.num_states()],
    };
    let mut order: Vec<usize> = (0..beliefs.len()).collect();
    let mut stats = Vec::new();
    let mut residual = f64::INFINITY;

    while stats.len() < cfg.max_stages {
        let stage = stats.len();
        order.shuffle(&mut rng);
        let mut next: Vec<AlphaVector> = Vec::new();
        let mut reused = vec![false; policy.vectors().len()];
        let mut next_values = vec![f64::NEG_INFINITY; beliefs.len()];
        let mut backups = 0;
        for &i in &order {
            if next_values[i] >= values[i] {
                continue;
            }
            let b = &beliefs[i];
            let (old_best, _) = best_at(policy.vectors(), b);
            let alpha = backup.run(model, &policy, b, old_best);
            backups += 1;
            let vector = if dot(&alpha, b) >= values[i] {
                alpha
            } else if !reused[old_best] {
                reused[old_best] = true;
                policy.vectors()[old_best].clone()
            } else {
                // already in the new set, so b is improved already
                continue;
            };
            raise_values(&mut next_values, &beliefs, &vector);
            next.push(vector);
        }
        let improvements: Vec<f64> = next_values.iter().zip(&values).map(|(n, o)| n - o).collect();
        let max_improvement = improvements.iter().cloned().fold(0.0, f64::max);
        let min_improvement = improvements.iter().cloned().fold(f64::INFINITY, f64::min);
        stats.push(StageStats {
            backups,
            vectors: next.len(),
            max_improvement,
            min_improvement,
        });
        log::trace!("stage {stage}: {} vectors, max improvement {max_improvement}", next.len());
        let label = policy.model_label.clone();
        policy = AlphaVectorPolicy::new(next, label)?;
        values = next_values;
        residual = max_improvement;
        if max_improvement > cfg.tolerance || stats.len() >= cfg.max_stages {
            continue;
        }
        // A single vector can nudge every belief up by a hair and end the
        // stage early, so confirm with a backup at every belief.
        let candidates = full_backup(model, &policy, &beliefs, &values);
        residual = candidates.iter().map(|c| c.1).fold(0.0, f64::max);
        if residual <= cfg.tolerance {
            break;
        }
        let before = values.clone();
        let mut added = 0;
        for (i, _, alpha) in candidates {
            if residual_gain(&alpha, &beliefs[i], values[i]) <= cfg.tolerance {
                continue;
            }
            raise_values(&mut values, &beliefs, &alpha);
            policy.push(alpha);
            added += 1;
        }
        let improvements: Vec<f64> = values.iter().zip(&before).map(|(n, o)| n - o).collect();
        stats.push(StageStats {
            backups: beliefs.len(),
            vectors: added,
            max_improvement: improvements.iter().cloned().fold(0.0, f64::max),
            min_improvement: improvements.iter().cloned().fold(f64::INFINITY, f64::min),
        });
        if stats.len() >= cfg.max_stages {
            break;
        }
    }

    policy.model_hash = crate::pomdp::model_hash(model);
    policy.meta = SolverMeta {
        belief_set_size: beliefs.len(),
        horizon: cfg.horizon,
        tolerance: cfg.tolerance,
        max_stages: cfg.max_stages,
        seed: cfg.seed,
        stages: stats.len(),
        residual,
        stage_stats: stats,
    };
    Ok(policy)
}

/// Raw values of `policy` at each belief.
pub fn values_at(policy: &AlphaVectorPolicy, beliefs: &[Belief]) -> Vec<f64> {
    beliefs.iter().map(|b| policy.value(b.probs())).collect()
}
