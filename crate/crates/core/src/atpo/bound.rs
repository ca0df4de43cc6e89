//! Runtime check of the cumulative-loss bound against a fixed comparator.
//!
//! For a trajectory of T steps with posteriors `p_t` and a stationary
//! comparator `q` over models,
//!
//! ```text
//! Σ_t L_t(p_t) ≤ Σ_t L_t(q) + √(2/T) Σ_t KL(q ‖ p_t) + √(T/2) · R_max² / (1 − γ)²
//! ```

/// Slack allowed before a trajectory counts as violating the bound.
pub const BOUND_TOLERANCE: f64 = 1e-6;

/// Posterior used to act at one step, with the true-model loss of each model's policy.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundStep {
    pub posterior: Vec<f64>,
    pub model_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub horizon: usize,
    pub r_max: f64,
    pub discount: f64,
    pub comparator: Vec<f64>,
    /// `L_t(p_t)` per step.
    pub posterior_losses: Vec<f64>,
    /// `L_t(q)` per step.
    pub comparator_losses: Vec<f64>,
    pub kl_terms: Vec<f64>,
    pub left: f64,
    /// Infinite when some KL term is.
    pub right: f64,
}

impl BoundReport {
    pub fn violated(&self) -> bool {
        self.left > self.right + BOUND_TOLERANCE
    }

    /// `right − left`.
    pub fn slack(&self) -> f64 {
        self.right - self.left
    }
}

fn kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(&qk, _)| qk > 0.0)
        .map(|(&qk, &pk)| if pk > 0.0 { qk * (qk / pk).ln() } else { f64::INFINITY })
        .sum()
}

pub fn check_bound(trace: &[BoundStep], comparator: &[f64], r_max: f64, discount: f64) -> BoundReport {
    let t = trace.len();
    let posterior_losses: Vec<f64> = trace.iter().map(|s| super::expected_loss(&s.posterior, &s.model_losses)).collect();
    let comparator_losses: Vec<f64> = trace.iter().map(|s| super::expected_loss(comparator, &s.model_losses)).collect();
    let kl_terms: Vec<f64> = trace.iter().map(|s| kl(comparator, &s.posterior)).collect();
    let left = posterior_losses.iter().sum();
    let right = if t == 0 {
        0.0
    } else {
        let tf = t as f64;
        let kl_sum: f64 = kl_terms.iter().sum();
        let constant = (tf / 2.0).sqrt() * r_max * r_max / ((1.0 - discount) * (1.0 - discount));
        comparator_losses.iter().sum::<f64>() + (2.0 / tf).sqrt() * kl_sum + constant
    };
    BoundReport {
        horizon: t,
        r_max,
        discount,
        comparator: comparator.to_vec(),
        posterior_losses,
        comparator_losses,
        kl_terms,
        left,
        right,
    }
}
