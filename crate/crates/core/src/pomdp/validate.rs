use std::fmt;

use super::belief::PROB_TOLERANCE;
use super::model::TabularPomdp;

/// A single broken model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TransitionMass { action: usize, state: usize, mass: f64 },
    NegativeTransition { action: usize, state: usize, next_state: usize, value: f64 },
    ObservationMass { action: usize, next_state: usize, mass: f64 },
    NegativeObservation { action: usize, next_state: usize, observation: usize, value: f64 },
    InitialMass { mass: f64 },
    NegativeInitial { state: usize, value: f64 },
    Discount { value: f64 },
    NonFiniteReward { state: usize, action: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TransitionMass { action, state, mass } => {
                write!(f, "transition row (a={action}, x={state}) has mass {mass}")
            }
            Violation::NegativeTransition { action, state, next_state, value } => {
                write!(f, "transition T[{action}][{state}][{next_state}] = {value} is negative")
            }
            Violation::ObservationMass { action, next_state, mass } => {
                write!(f, "observation row (a={action}, x'={next_state}) has mass {mass}")
            }
            Violation::NegativeObservation { action, next_state, observation, value } => {
                write!(f, "observation O[{action}][{next_state}][{observation}] = {value} is negative")
            }
            Violation::InitialMass { mass } => write!(f, "initial belief has mass {mass}"),
            Violation::NegativeInitial { state, value } => {
                write!(f, "initial belief entry {state} = {value} is negative")
            }
            Violation::Discount { value } => write!(f, "discount {value} outside [0, 1)"),
            Violation::NonFiniteReward { state, action } => {
                write!(f, "reward R[{state}][{action}] is not finite")
            }
        }
    }
}

/// Lists every invariant the model breaks; empty when the model is well formed.
pub fn validate(model: &TabularPomdp) -> Vec<Violation> {
    let mut out = Vec::new();
    let (ns, na) = (model.num_states(), model.num_actions());
    if !(0.0..1.0).contains(&model.discount()) {
        out.push(Violation::Discount { value: model.discount() });
    }
    for a in 0..na {
        for x in 0..ns {
            let mut mass = 0.0;
            for (y, p) in model.transition_row(a, x).iter() {
                if p < 0.0 {
                    out.push(Violation::NegativeTransition { action: a, state: x, next_state: y, value: p });
                }
                mass += p;
            }
            if (mass - 1.0).abs() > PROB_TOLERANCE {
                out.push(Violation::TransitionMass { action: a, state: x, mass });
            }
        }
    }
    for a in 0..na {
        for y in 0..ns {
            let mut mass = 0.0;
            for (z, p) in model.observation_row(a, y).iter() {
                if p < 0.0 {
                    out.push(Violation::NegativeObservation { action: a, next_state: y, observation: z, value: p });
                }
                mass += p;
            }
            if (mass - 1.0).abs() > PROB_TOLERANCE {
                out.push(Violation::ObservationMass { action: a, next_state: y, mass });
            }
        }
    }
    let b0 = model.initial_belief().probs();
    for (x, &p) in b0.iter().enumerate() {
        if p < 0.0 {
            out.push(Violation::NegativeInitial { state: x, value: p });
        }
    }
    let mass: f64 = b0.iter().sum();
    if (mass - 1.0).abs() > PROB_TOLERANCE {
        out.push(Violation::InitialMass { mass });
    }
    for x in 0..ns {
        for a in 0..na {
            if !model.reward(x, a).is_finite() {
                out.push(Violation::NonFiniteReward { state: x, action: a });
            }
        }
    }
    out
}
