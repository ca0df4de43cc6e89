use rand::Rng;

use super::model::TabularPomdp;
use super::table::Row;

/// Draws an index from a row by inverse-CDF sampling.
pub fn sample_row<R: Rng + ?Sized>(row: Row<'_>, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, p) in row.iter() {
        acc += p;
        last = j;
        if u < acc {
            return j;
        }
    }
    // rounding left u above the accumulated mass
    last
}

pub fn sample_probs<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    sample_row(Row::Dense(probs), rng)
}

/// One environment step: successor, observation and the reward `R[x][a]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next_state: usize,
    pub observation: usize,
    pub reward: f64,
}

pub fn simulate_step<R: Rng + ?Sized>(model: &TabularPomdp, state: usize, action: usize, rng: &mut R) -> Step {
    let next_state = sample_row(model.transition_row(action, state), rng);
    let observation = sample_row(model.observation_row(action, next_state), rng);
    Step {
        next_state,
        observation,
        reward: model.reward(state, action),
    }
}
