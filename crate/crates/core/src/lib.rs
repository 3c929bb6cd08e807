//! Partially observed linear-quadratic stochastic control.
//!
//! The controller sees only a noisy observation `Y` of the state `X`. The
//! optimal control is a feedback on the filter estimate `X̂ = E[X | Y]`,
//! with gains from a backward Riccati equation and filter covariance from a
//! forward one. This crate solves those equations, evaluates the
//! closed-form optimal value, simulates the closed loop, and checks the
//! theory against Monte Carlo estimates.

pub mod cli;
pub mod detsolve;
pub mod error;
pub mod export;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod ode;
pub mod scenario;
pub mod simulate;
pub mod value;
pub mod verify;

pub use error::{Error, Result};
pub use grid::TimeGrid;
