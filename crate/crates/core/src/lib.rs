//! Combined causal models: piecewise high-level explanations of a small
//! neural network, fitted by interchange interventions.

pub mod alignment;
pub mod datagen;
pub mod error;
pub mod evalgraph;
pub mod net;
pub mod partition;
pub mod pipeline;
pub mod scm;
pub mod svg;
pub mod task;
pub mod zoo;

pub use error::{Error, Result};
