//! The fixed-point construction of the profile correction and the eigenvalue search.

pub mod contraction;
pub mod pstar;
pub mod solve;

pub use contraction::{fixed_point, FixedPoint, FixedPointOptions, Problem};
pub use pstar::{generate_pstar, PstarSeed, PstarSolution};
pub use solve::{locate_a, probe, solve, sweep, Setup, SolveOptions, SolveRecord, SweepEntry};
