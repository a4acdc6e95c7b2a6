//! Cluster hierarchy over predictors and the hypothesis poset it induces.
//!
//! Every node of a [`ClusterTree`] indexes one null hypothesis `H_C`: "no
//! predictor in `C` is a true variable". `H_C'` implies `H_C` whenever
//! `C ⊆ C'`, so rejecting a cluster forces rejection of every enclosing
//! cluster. Rejectable families are therefore the upward-closed sets of the
//! tree (upsets, closed toward the roots), and they are never materialized:
//! [`closure`] walks ancestors instead.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Add;

use fixedbitset::FixedBitSet;
use num_rational::Ratio;
use num_traits::Zero;

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNode {
    pub id: NodeId,
    /// Sorted predictor indices.
    pub members: Vec<usize>,
    /// Zero or two child ids.
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    /// Dissimilarity at which the node formed; 0 for leaves.
    pub merge_height: f64,
}

/// Input form of a node; parents and roots are derived.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeSpec {
    pub id: NodeId,
    pub members: Vec<usize>,
    pub children: Vec<NodeId>,
    pub merge_height: f64,
}

/// One agglomeration step: join nodes `left` and `right` at `height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: NodeId,
    pub right: NodeId,
    pub height: f64,
}

/// A laminar, bifurcating forest of predictor clusters.
///
/// Leaves are singletons, internal nodes have exactly two children whose
/// member sets partition the parent's, and ids are dense `0..m`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "TreeRepr", into = "TreeRepr")
)]
pub struct ClusterTree {
    nodes: Vec<ClusterNode>,
    roots: Vec<NodeId>,
    leaf_count: usize,
    leaf_of: Vec<NodeId>,
}

impl ClusterTree {
    /// Validates `specs` and links parents.
    pub fn new(leaf_count: usize, specs: Vec<NodeSpec>) -> Result<Self> {
        if leaf_count == 0 {
            return Err(Error::EmptyTree);
        }
        let m = specs.len();
        let mut parent = vec![None; m];
        for (position, spec) in specs.iter().enumerate() {
            if spec.id != position {
                return Err(Error::NonDenseId { position, id: spec.id });
            }
            if spec.members.is_empty() {
                return Err(Error::EmptyMembers { id: spec.id });
            }
            let sorted = spec.members.windows(2).all(|w| w[0] < w[1]);
            if !sorted || *spec.members.last().unwrap() >= leaf_count {
                return Err(Error::BadMembers { id: spec.id, leaf_count });
            }
            match spec.children.len() {
                0 => {
                    if spec.members.len() != 1 {
                        return Err(Error::LeafNotSingleton { id: spec.id });
                    }
                }
                2 => {}
                count => return Err(Error::NotBifurcating { id: spec.id, count }),
            }
            for &c in &spec.children {
                if c >= m {
                    return Err(Error::InvalidNodeId { id: c, len: m });
                }
                if parent[c].is_some() {
                    return Err(Error::MultipleParents { id: c });
                }
                parent[c] = Some(spec.id);
            }
            if !(spec.merge_height.is_finite() && spec.merge_height >= 0.0) {
                return Err(Error::MergeHeight { id: spec.id });
            }
        }

        for spec in &specs {
            if spec.children.is_empty() {
                continue;
            }
            let (a, b) = (&specs[spec.children[0]], &specs[spec.children[1]]);
            if a.id == b.id || merged_disjoint(&a.members, &b.members).as_deref() != Some(&spec.members[..]) {
                return Err(Error::ChildrenDoNotPartition { id: spec.id });
            }
            if a.merge_height > spec.merge_height || b.merge_height > spec.merge_height {
                return Err(Error::MergeHeight { id: spec.id });
            }
        }

        let mut leaf_of = vec![usize::MAX; leaf_count];
        let mut coverage = vec![0usize; leaf_count];
        for spec in specs.iter().filter(|s| s.children.is_empty()) {
            let predictor = spec.members[0];
            coverage[predictor] += 1;
            leaf_of[predictor] = spec.id;
        }
        if let Some((predictor, &count)) = coverage.iter().enumerate().find(|(_, &c)| c != 1) {
            return Err(Error::LeafCoverage { predictor, count });
        }

        // Children are strict subsets of their parent, so parent links are acyclic.
        let roots = (0..m).filter(|&i| parent[i].is_none()).collect();
        let nodes = specs
            .into_iter()
            .zip(parent)
            .map(|(s, parent)| ClusterNode {
                id: s.id,
                members: s.members,
                children: s.children,
                parent,
                merge_height: s.merge_height,
            })
            .collect();
        Ok(Self { nodes, roots, leaf_count, leaf_of })
    }

    /// `p` unrelated singleton hypotheses.
    pub fn flat(p: usize) -> Result<Self> {
        Self::from_merges(p, &[])
    }

    /// Builds a tree from an agglomeration history. Leaves get ids `0..p`
    /// (leaf `i` holds predictor `i`); merge `k` creates node `p + k`.
    pub fn from_merges(p: usize, merges: &[Merge]) -> Result<Self> {
        let mut specs: Vec<NodeSpec> = (0..p)
            .map(|i| NodeSpec { id: i, members: vec![i], children: Vec::new(), merge_height: 0.0 })
            .collect();
        for (k, merge) in merges.iter().enumerate() {
            let id = p + k;
            for c in [merge.left, merge.right] {
                if c >= id {
                    return Err(Error::InvalidNodeId { id: c, len: id });
                }
            }
            let members = merged_disjoint(&specs[merge.left].members, &specs[merge.right].members)
                .ok_or(Error::ChildrenDoNotPartition { id })?;
            specs.push(NodeSpec {
                id,
                members,
                children: vec![merge.left, merge.right],
                merge_height: merge.height,
            });
        }
        Self::new(p, specs)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of predictors.
    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn nodes(&self) -> &[ClusterNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &ClusterNode {
        &self.nodes[id]
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    /// Leaf node holding `predictor`.
    pub fn leaf(&self, predictor: usize) -> NodeId {
        self.leaf_of[predictor]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    /// Strict ancestors of `id`, nearest first.
    pub fn ancestors(&self, id: NodeId) -> Ancestors<'_> {
        Ancestors { tree: self, next: self.nodes[id].parent }
    }

    /// True when `outer`'s member set contains `inner`'s (`outer` is `inner`
    /// or one of its ancestors).
    pub fn encloses(&self, outer: NodeId, inner: NodeId) -> bool {
        outer == inner || self.ancestors(inner).any(|a| a == outer)
    }

    pub fn to_specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id,
                members: n.members.clone(),
                children: n.children.clone(),
                merge_height: n.merge_height,
            })
            .collect()
    }

    fn check(&self, set: &HypothesisSet) -> Result<()> {
        if set.capacity() != self.len() {
            return Err(Error::SetSizeMismatch { expected: self.len(), got: set.capacity() });
        }
        Ok(())
    }
}

pub struct Ancestors<'a> {
    tree: &'a ClusterTree,
    next: Option<NodeId>,
}

impl Iterator for Ancestors<'_> {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        let current = self.next?;
        self.next = self.tree.nodes[current].parent;
        Some(current)
    }
}

/// Sorted union of two sorted sets, or `None` if they overlap.
fn merged_disjoint(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            core::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            core::cmp::Ordering::Equal => return None,
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    Some(out)
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct TreeRepr {
    leaf_count: usize,
    nodes: Vec<NodeSpec>,
}

#[cfg(feature = "serde")]
impl TryFrom<TreeRepr> for ClusterTree {
    type Error = Error;

    fn try_from(repr: TreeRepr) -> Result<Self> {
        ClusterTree::new(repr.leaf_count, repr.nodes)
    }
}

#[cfg(feature = "serde")]
impl From<ClusterTree> for TreeRepr {
    fn from(tree: ClusterTree) -> Self {
        TreeRepr { leaf_count: tree.leaf_count, nodes: tree.to_specs() }
    }
}

/// A set of hypothesis (node) ids, sized to one tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HypothesisSet(FixedBitSet);

impl HypothesisSet {
    pub fn empty(m: usize) -> Self {
        Self(FixedBitSet::with_capacity(m))
    }

    pub fn full(m: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(m);
        bits.insert_range(..);
        Self(bits)
    }

    pub fn from_ids<I: IntoIterator<Item = NodeId>>(m: usize, ids: I) -> Result<Self> {
        let mut set = Self::empty(m);
        for id in ids {
            if id >= m {
                return Err(Error::InvalidNodeId { id, len: m });
            }
            set.0.insert(id);
        }
        Ok(set)
    }

    pub fn capacity(&self) -> usize {
        self.0.len()
    }

    pub fn insert(&mut self, id: NodeId) {
        self.0.insert(id);
    }

    pub fn remove(&mut self, id: NodeId) {
        self.0.set(id, false);
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.0.contains(id)
    }

    pub fn len(&self) -> usize {
        self.0.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_clear()
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self(&self.0 & &other.0)
    }

    pub fn union(&self, other: &Self) -> Self {
        Self(&self.0 | &other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.ones()
    }

    pub fn to_vec(&self) -> Vec<NodeId> {
        self.iter().collect()
    }
}

/// Per-node weights `phi_C` defining the sizing function.
///
/// Weights must not increase toward the root (`C1 ⊆ C2 ⇒ phi(C1) ≥ phi(C2)`),
/// which makes the sizing function increasing under set inclusion.
#[derive(Debug, Clone, PartialEq)]
pub struct SizingWeights {
    phi: Vec<f64>,
    exact: Option<Vec<Ratio<i64>>>,
}

impl SizingWeights {
    /// `phi_C = 1/|C|`, carried exactly as rationals as well.
    pub fn inverse_size(tree: &ClusterTree) -> Self {
        let exact: Vec<Ratio<i64>> =
            tree.nodes().iter().map(|n| Ratio::new(1, n.members.len() as i64)).collect();
        let phi = tree.nodes().iter().map(|n| 1.0 / n.members.len() as f64).collect();
        Self { phi, exact: Some(exact) }
    }

    pub fn new(tree: &ClusterTree, phi: Vec<f64>) -> Result<Self> {
        validate_weights(tree, &phi, |&w| w.is_finite() && w >= 0.0)?;
        Ok(Self { phi, exact: None })
    }

    pub fn from_rationals(tree: &ClusterTree, exact: Vec<Ratio<i64>>) -> Result<Self> {
        validate_weights(tree, &exact, |w| *w >= Ratio::zero())?;
        let phi = exact.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect();
        Ok(Self { phi, exact: Some(exact) })
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn get(&self, id: NodeId) -> f64 {
        self.phi[id]
    }

    /// Rational weights, when the weights were built from rationals.
    pub fn exact(&self) -> Option<&[Ratio<i64>]> {
        self.exact.as_deref()
    }

    pub fn total(&self) -> f64 {
        self.phi.iter().sum()
    }
}

fn validate_weights<T: PartialOrd>(
    tree: &ClusterTree,
    phi: &[T],
    valid: impl Fn(&T) -> bool,
) -> Result<()> {
    if phi.len() != tree.len() {
        return Err(Error::WeightLength { expected: tree.len(), got: phi.len() });
    }
    for node in tree.nodes() {
        if !valid(&phi[node.id]) {
            return Err(Error::NegativeWeight { id: node.id });
        }
        if let Some(parent) = node.parent {
            if phi[node.id] < phi[parent] {
                return Err(Error::NonMonotoneWeights { child: node.id, parent });
            }
        }
    }
    Ok(())
}

/// Smallest upward-closed set containing `set`: every member plus all its ancestors.
pub fn closure(set: &HypothesisSet, tree: &ClusterTree) -> Result<HypothesisSet> {
    tree.check(set)?;
    let mut out = set.clone();
    for id in set.iter() {
        for a in tree.ancestors(id) {
            if out.contains(a) {
                // Everything above an already-closed node is present.
                if set.contains(a) {
                    continue;
                }
                break;
            }
            out.insert(a);
        }
    }
    Ok(out)
}

pub fn is_upset(set: &HypothesisSet, tree: &ClusterTree) -> Result<bool> {
    tree.check(set)?;
    Ok(set.iter().all(|id| tree.parent(id).is_none_or(|p| set.contains(p))))
}

/// Clusters in `set` that contain no other cluster of `set`.
pub fn minimal_elements(set: &HypothesisSet, tree: &ClusterTree) -> Result<HypothesisSet> {
    tree.check(set)?;
    let mut covers_member = FixedBitSet::with_capacity(tree.len());
    for id in set.iter() {
        for a in tree.ancestors(id) {
            if covers_member.put(a) {
                break;
            }
        }
    }
    let mut out = set.clone();
    for id in set.iter() {
        if covers_member.contains(id) {
            out.remove(id);
        }
    }
    Ok(out)
}

/// Sizing function: sum of `phi` over the minimal elements of `set`.
pub fn sigma(set: &HypothesisSet, tree: &ClusterTree, weights: &SizingWeights) -> Result<f64> {
    sigma_with(set, tree, weights.phi())
}

/// [`sigma`] over an arbitrary weight type (used with exact rationals).
pub fn sigma_with<T: Copy + Zero + Add<Output = T>>(
    set: &HypothesisSet,
    tree: &ClusterTree,
    phi: &[T],
) -> Result<T> {
    if phi.len() != tree.len() {
        return Err(Error::WeightLength { expected: tree.len(), got: phi.len() });
    }
    let min = minimal_elements(set, tree)?;
    Ok(min.iter().fold(T::zero(), |acc, id| acc + phi[id]))
}
