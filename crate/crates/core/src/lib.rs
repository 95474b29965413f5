//! Self-similar blowup profiles of the focusing power NLS in three dimensions.

pub mod cheb;
pub mod cli;
pub mod error;
pub mod fixpoint_solver;
pub mod fundsys;
pub mod inverse_op;
pub mod newton;
pub mod profile_eq;
pub mod quad;
pub mod reconstruct;
pub mod shooting_oracle;

pub use error::{Error, Result};
