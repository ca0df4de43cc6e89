//! Exact value iteration for MMDPs and point-based solving for POMDPs.

pub mod alpha;
pub mod perseus;
pub mod policy_io;
pub mod value_iteration;

pub use alpha::{
    lookahead_action, lookahead_value, loss, losses, policy_action, policy_q, policy_value, q_values, AlphaVector,
    AlphaVectorPolicy, SolverMeta, StageStats,
};
pub use value_iteration::{
    bellman_residual, value_iteration, value_iteration_with, StateValueFunction, ValueIterationConfig,
};
pub use perseus::{collect_beliefs, perseus_solve, PerseusConfig, DEFAULT_MAX_STAGES};
pub use policy_io::{load_policy, read_policy, save_policy, write_policy, PolicyCache};
