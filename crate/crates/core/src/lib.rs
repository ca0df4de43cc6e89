//! Ad hoc teamwork under partial observability.

pub mod atpo;
pub mod baselines;
pub mod domains;
pub mod error;
pub mod harness;
pub mod pomdp;
pub mod solvers;

pub use error::{Error, Result};
