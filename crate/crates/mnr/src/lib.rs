//! Learning over network-structured observations.

pub mod assign;
pub mod model;
pub mod refine;
pub mod spn;

pub use model::{ClassId, MnrConfig, MnrModel};
pub use refine::{Assignment, Tracked};
pub use spn::{NodeId, NodeType, Observed, Spn, SpnError};
