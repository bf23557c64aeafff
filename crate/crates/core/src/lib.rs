//! Cache refresh policies for dynamic content served from a small-cell cache.
//!
//! Each cached item ages by one slot per time step until it is refreshed over
//! the backhaul. Users dissatisfied with a stale copy are redirected to the
//! macro cell at a per-user cost. The crate provides:
//!
//! - [`model`]: the per-content cost model and age dynamics,
//! - [`mdp`]: an exact relative-value-iteration solver for the per-content
//!   average-cost problem, structural checks on its solution, and the
//!   renewal-cycle enumeration over refresh thresholds,
//! - [`bandit`]: an ε-greedy learner that picks refresh thresholds from
//!   sampled cycle costs,
//! - [`sim`]: the stochastic request environment, parameter schedules and
//!   regret accounting.

pub mod bandit;
pub mod checks;
pub mod error;
pub mod mdp;
pub mod model;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
