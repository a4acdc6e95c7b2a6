//! Setwise hypothesis testing over predictor cluster hierarchies with
//! generalized false-discovery-rate control.
//!
//! The crate is `no_std` and needs only `alloc`. It contains the pure parts of
//! the selection pipeline: the cluster hierarchy and its sizing function
//! ([`lattice`]), the generalized linear step-up procedures ([`stepup`]),
//! correlation clustering ([`clustering`]), and an exact verifier for the
//! pairwise weight decomposition of the sizing function ([`decomposition`]).

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod clustering;
pub mod decomposition;
mod error;
pub mod lattice;
pub mod stepup;

pub use error::{Error, Result};
pub use lattice::{ClusterNode, ClusterTree, HypothesisSet, Merge, NodeId, NodeSpec, SizingWeights};
pub use stepup::{PValues, Procedure, SelectionResult, SlopeRule};
pub use clustering::{CorrelationMatrix, Linkage};
