use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pomdp::TabularMmdp;

pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

/// Relative tolerance under which two Q-values count as tied.
const TIE_EPS: f64 = 1e-10;

/// States at which sweeps switch to rayon.
const PARALLEL_STATES: usize = 512;

#[derive(Debug, Clone, Copy)]
pub struct ValueIterationConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl ValueIterationConfig {
    pub fn new(tolerance: f64) -> Self {
        ValueIterationConfig {
            tolerance,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// Optimal state values `v*`, Q-values `q*` and the greedy joint policy.
#[derive(Debug, Clone, PartialEq)]
pub struct StateValueFunction {
    values: Vec<f64>,
    q: Vec<f64>,
    greedy: Vec<usize>,
    num_joint: usize,
    pub iterations: usize,
    /// Sup-norm Bellman residual of `values`.
    pub residual: f64,
}

impl StateValueFunction {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn q(&self, state: usize, joint: usize) -> f64 {
        self.q[state * self.num_joint + joint]
    }

    /// Greedy joint action, lowest index among ties.
    pub fn greedy_action(&self, state: usize) -> usize {
        self.greedy[state]
    }

    pub fn greedy_policy(&self) -> &[usize] {
        &self.greedy
    }
}

fn q_row(mmdp: &TabularMmdp, values: &[f64], x: usize, out: &mut [f64]) {
    let gamma = mmdp.discount();
    for (j, q) in out.iter_mut().enumerate() {
        let future: f64 = mmdp.transition_row(j, x).iter().map(|(y, p)| p * values[y]).sum();
        *q = mmdp.reward(x, j) + gamma * future;
    }
}

pub(crate) fn argmax_lowest(q: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] + TIE_EPS * q[best].abs().max(1.0) {
            best = j;
        }
    }
    best
}

fn sweep(mmdp: &TabularMmdp, values: &[f64]) -> Vec<f64> {
    let nj = mmdp.num_joint_actions();
    let backup = |x: usize| {
        let mut q = vec![0.0; nj];
        q_row(mmdp, values, x, &mut q);
        q.into_iter().fold(f64::NEG_INFINITY, f64::max)
    };
    if mmdp.num_states() >= PARALLEL_STATES {
        (0..mmdp.num_states()).into_par_iter().map(backup).collect()
    } else {
        (0..mmdp.num_states()).map(backup).collect()
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `‖v − B v‖∞` for the Bellman optimality operator `B`.
pub fn bellman_residual(mmdp: &TabularMmdp, values: &[f64]) -> f64 {
    sup_diff(values, &sweep(mmdp, values))
}

pub fn value_iteration(mmdp: &TabularMmdp, tolerance: f64) -> Result<StateValueFunction> {
    value_iteration_with(mmdp, &ValueIterationConfig::new(tolerance))
}

/// Synchronous value iteration.
///
/// Stops once successive iterates differ by at most `tolerance`; the
/// returned iterate then has Bellman residual at most `γ·tolerance`.
pub fn value_iteration_with(mmdp: &TabularMmdp, cfg: &ValueIterationConfig) -> Result<StateValueFunction> {
    let gamma = mmdp.discount();
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Configuration(format!("discount {gamma} must lie in [0, 1)")));
    }
    if !(cfg.tolerance > 0.0) {
        return Err(Error::Configuration("tolerance must be positive".into()));
    }
    let mut values = vec![0.0; mmdp.num_states()];
    let mut iterations = 0;
    loop {
        let next = sweep(mmdp, &values);
        iterations += 1;
        let delta = sup_diff(&next, &values);
        values = next;
        if delta <= cfg.tolerance {
            break;
        }
        if iterations >= cfg.max_iterations {
            return Err(Error::NonconvergenceBudget {
                iterations,
                residual: delta,
            });
        }
    }
    let nj = mmdp.num_joint_actions();
    let mut q = vec![0.0; mmdp.num_states() * nj];
    for (x, row) in q.chunks_mut(nj).enumerate() {
        q_row(mmdp, &values, x, row);
    }
    let greedy = q.chunks(nj).map(argmax_lowest).collect();
    let residual = q
        .chunks(nj)
        .zip(&values)
        .map(|(row, v)| (row.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v).abs())
        .fold(0.0, f64::max);
    Ok(StateValueFunction {
        values,
        q,
        greedy,
        num_joint: nj,
        iterations,
        residual,
    })
}
