//! Simulator and verification toolkit for the local Bak-Sneppen model on
//! finite connected graphs.
//!
//! The chain lives on a connected graph: a state is an active vertex plus a
//! one-to-one fitness map; each step moves the active vertex to the fitness
//! argmin over its closed neighborhood and redraws that neighborhood's
//! fitness i.i.d. `Exp(1)`. The crate provides
//!
//! * exact dynamics with pluggable step observers ([`dynamics`]),
//! * the conditioned-minimum law `ExpPlus(n)`, the threshold curve
//!   `p_{d,b}`, and its critical inverse `b_c(d, alpha)` ([`dist`]),
//! * exact stationary sampling without burn-in and closed-form stationary
//!   marginals ([`stationary`]),
//! * chain couplings and two-sided mixing bounds ([`coupling`]),
//! * threshold-avalanche statistics with exact binomial sandwiches
//!   ([`avalanche`]),
//! * the supporting statistical test kit ([`stats`]) and seeded RNG streams
//!   ([`rng`]).
//!
//! Determinism: every randomized routine takes a caller-supplied RNG, and
//! [`rng::replica_rng`] fixes a `(seed, stream)` pair to a bit-exact
//! trajectory.

pub mod avalanche;
pub mod coupling;
pub mod dist;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod rng;
pub mod stationary;
pub mod stats;

pub use error::{Error, Result};
