//! Flow-matching velocity-deficit laboratory.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod field;
pub mod interpolant;
pub mod nn;
pub mod oracle;
pub mod playbook;
pub mod rng;
pub mod solver;
pub mod training;

pub use error::{Error, Result};
pub use field::VelocityField;
pub use interpolant::{Interpolant, PathKind};
