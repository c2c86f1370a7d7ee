//! Reaction product prediction by learned sequences of graph edits.

pub mod diffcore;
pub mod molgraph;
pub mod gnn;
pub mod pairnet;
pub mod policy;
pub mod training;
pub mod decode;
pub mod harness;
