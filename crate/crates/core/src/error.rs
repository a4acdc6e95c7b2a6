use alloc::vec::Vec;

use crate::lattice::NodeId;

/// Errors raised by the core crate.
///
/// Structural problems with trees and weights are reported at construction
/// time; the step-up engine only sees validated inputs.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("node at position {position} carries id {id}; ids must be dense 0..m")]
    NonDenseId { position: usize, id: NodeId },
    #[error("node id {id} out of range for a tree with {len} nodes")]
    InvalidNodeId { id: NodeId, len: usize },
    #[error("hypothesis set sized for {got} nodes used with a tree of {expected} nodes")]
    SetSizeMismatch { expected: usize, got: usize },
    #[error("node {id} has an empty member set")]
    EmptyMembers { id: NodeId },
    #[error("node {id}: members must be strictly increasing predictor indices below {leaf_count}")]
    BadMembers { id: NodeId, leaf_count: usize },
    #[error("leaf node {id} must contain exactly one predictor")]
    LeafNotSingleton { id: NodeId },
    #[error("node {id} has {count} children; the hierarchy must be bifurcating")]
    NotBifurcating { id: NodeId, count: usize },
    #[error("node {id} is listed as a child more than once")]
    MultipleParents { id: NodeId },
    #[error("children of node {id} do not partition its members")]
    ChildrenDoNotPartition { id: NodeId },
    #[error("predictor {predictor} is covered by {count} leaves (expected exactly one)")]
    LeafCoverage { predictor: usize, count: usize },
    #[error("node {id}: merge height must be finite, non-negative and no lower than its children")]
    MergeHeight { id: NodeId },
    #[error("tree must contain at least one predictor")]
    EmptyTree,
    #[error("expected {expected} weights, got {got}")]
    WeightLength { expected: usize, got: usize },
    #[error("weight for node {id} must be finite and non-negative")]
    NegativeWeight { id: NodeId },
    #[error("weights are not monotone: child {child} has a smaller weight than its parent {parent}")]
    NonMonotoneWeights { child: NodeId, parent: NodeId },
    #[error("p-value vector has {got} entries for {expected} hypotheses")]
    PValueLength { expected: usize, got: usize },
    #[error("p-value for node {id} is {value}, outside [0, 1]")]
    PValueRange { id: NodeId, value: f64 },
    #[error("target level q = {0} must lie strictly between 0 and 1")]
    InvalidLevel(f64),
    #[error("threshold slope alpha = {0} must be positive and finite")]
    InvalidSlope(f64),
    #[error("hypothesis count must be at least one")]
    NoHypotheses,
    #[error("node {id} has zero weight; the arbitrary-dependence slope needs phi > 0")]
    ZeroWeight { id: NodeId },
    #[error("matrix of {len} values does not match {rows} x {cols}")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("need at least two observations, got {0}")]
    TooFewObservations(usize),
    #[error("column {0} is constant")]
    ConstantColumn(usize),
    #[error("correlation matrix is not symmetric with unit diagonal and entries in [-1, 1]")]
    NotACorrelationMatrix,
    #[error("correlation threshold {0} must lie in [0, 1]")]
    InvalidThreshold(f64),
    #[error("lattice guard exceeded: {what} is {got}, limit {limit}")]
    LatticeTooLarge { what: &'static str, got: usize, limit: usize },
    #[error("sizing function decreases from upset {larger:?} to its subset {smaller:?}")]
    NotIncreasing { smaller: Vec<NodeId>, larger: Vec<NodeId> },
    #[error("Möbius weight of upset {upset:?} is negative")]
    NegativeSubsetWeight { upset: Vec<NodeId> },
    #[error("upset {upset:?} has three or more minimal elements but non-zero weight")]
    HigherOrderWeight { upset: Vec<NodeId> },
    #[error("weight reconstruction failed for upset {upset:?}")]
    Reconstruction { upset: Vec<NodeId> },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
