//! Hierarchical model predictive control with robust constraint tightening,
//! and a closed-loop simulator for a vehicle with a slow thermal state.

pub mod cli;
pub mod controllers;
pub mod error;
pub mod model;
pub mod mpc;
pub mod preview;
pub mod qp;
pub mod sim;

pub use error::{Error, Result};
