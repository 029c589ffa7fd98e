//! Differentiable ODE parameter estimation.
//!
//! Mechanistic models are integrated with a generic Runge-Kutta solver over a
//! reverse-mode scalar tape, so gradients of a trajectory loss flow back to
//! every model parameter and unobserved initial condition.

pub mod autodiff;
pub mod benchmark;
pub mod covid;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod integrators;

pub use error::{Error, Result};
