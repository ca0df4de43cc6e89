//! Tabular model types, belief filtering and model validation.

pub mod belief;
pub mod format;
pub mod model;
pub mod simulate;
pub mod table;
pub mod validate;

pub use belief::{belief_update, entropy, Belief, BeliefUpdate, History, PROB_TOLERANCE};
pub use format::{load_model, model_hash, read_model, save_model, write_model};
pub use model::{PomdpBuilder, TabularMmdp, TabularPomdp};
pub use simulate::{simulate_step, Step};
pub use table::{RowTable, Storage};
pub use validate::{validate, Violation};
