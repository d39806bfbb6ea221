//! A gradient-free environment modeller built from ternary state variables.
//!
//! The model learns conditioning relations online, one observation at a time,
//! and can be queried by a backward-chaining planner.

pub mod encapsulation;
pub mod env;
pub mod fuzz;
pub mod learning;
pub mod planner;
pub mod replay;
pub mod significance;
pub mod snapshot;
pub mod sv;

pub use learning::{LearningConfig, StepReport};
pub use sv::{DsvKind, Flag, Model, ModelError, Observation, SvId, SvKind, SvState};
