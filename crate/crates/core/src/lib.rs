//! Model predictive control as a perturbed monotone inclusion.

pub mod error;
pub mod grid;
pub mod monotone;
pub mod ocp;
pub mod plant;
pub mod splitting;
pub mod mpc;
pub mod verify;

pub use error::{Error, Result};
