//! Mixed-strategy generalized Nash equilibrium seeking for games with mixed-integer
//! decisions, by Bregman forward-reflected-backward splitting.

pub mod error;
pub mod experiment;
pub mod game;
pub mod linalg;
pub mod network;
pub mod operators;
pub mod parallel;
pub mod regularizers;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
