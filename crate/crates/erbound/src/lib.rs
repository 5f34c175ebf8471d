//! Error-bound moduli, directional minimax values, stability verdicts, and
//! Hoffman constants for finite and discretized semi-infinite convex
//! constraint systems in R^n.

pub mod calculus;
pub mod error;
pub mod fixtures;
pub mod hoffman;
pub mod minimax;
pub mod model;
pub mod moduli;
pub mod qp;
pub mod report;
pub mod stability;
pub mod synth;
pub mod vecmath;

pub use error::{Error, Result};
