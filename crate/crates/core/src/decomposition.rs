//! Exact decomposition of the sizing function on small trees.
//!
//! On the lattice of upsets of a cluster tree, Möbius inversion turns σ into
//! per-upset weights `W_U` with `σ(A) = Σ_{U ⊆ A} W_U`. For σ built from
//! monotone node weights these are non-negative and vanish on upsets with
//! three or more minimal elements, which is what lets σ be written as a sum
//! of pairwise weights `σ(A) = Σ_{i,j ∈ A} w_ij`. This module is a verifier
//! for small instances; the step-up engine never needs the weights.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{Add, Mul, Neg, Sub};

use num_rational::Ratio;
use num_traits::Zero;
use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{ClusterTree, NodeId};

/// Largest tree the lattice is built for. Bifurcating trees on eight
/// leaves have fifteen nodes.
pub const MAX_LATTICE_NODES: usize = 16;
/// Largest number of upsets enumerated.
pub const MAX_UPSETS: usize = 4096;

/// Number type used for weights: exact rationals, or floats compared with a
/// 1e-9 tolerance.
pub trait Weight:
    Copy + Debug + PartialOrd + Zero + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn from_int(v: i64) -> Self;
    fn half(self) -> Self;
    fn close(self, other: Self) -> bool;
    fn to_f64(self) -> f64;
}

impl Weight for f64 {
    fn from_int(v: i64) -> Self {
        v as f64
    }
    fn half(self) -> Self {
        self / 2.0
    }
    fn close(self, other: Self) -> bool {
        (self - other).abs() <= 1e-9 * (1.0 + self.abs().max(other.abs()))
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl Weight for Ratio<i64> {
    fn from_int(v: i64) -> Self {
        Ratio::from_integer(v)
    }
    fn half(self) -> Self {
        self / Ratio::from_integer(2)
    }
    fn close(self, other: Self) -> bool {
        self == other
    }
    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

/// Non-negativity test with the same slack as [`Weight::close`].
fn non_negative<T: Weight>(v: T) -> bool {
    v >= T::zero() || v.close(T::zero())
}

/// All upward-closed node sets of a small tree, as bitmasks over node ids.
///
/// Upsets are ordered by cardinality, so every upset appears after all of
/// its subsets.
#[derive(Debug, Clone)]
pub struct UpsetLattice {
    node_count: usize,
    upsets: Vec<u32>,
    index: BTreeMap<u32, usize>,
    /// For each node, the mask of its parent (or 0).
    parent_mask: Vec<u32>,
}

impl UpsetLattice {
    pub fn len(&self) -> usize {
        self.upsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upsets.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn upsets(&self) -> &[u32] {
        &self.upsets
    }

    pub fn index_of(&self, mask: u32) -> Option<usize> {
        self.index.get(&mask).copied()
    }

    /// Whether upset `inner` is contained in upset `outer`.
    pub fn contains(&self, outer: usize, inner: usize) -> bool {
        self.upsets[inner] & !self.upsets[outer] == 0
    }

    /// Minimal elements of a mask: members whose children are all outside it.
    pub fn minimal(&self, mask: u32, tree: &ClusterTree) -> u32 {
        let mut out = 0;
        for id in ids(mask) {
            if tree.node(id).children.iter().all(|&c| mask & (1 << c) == 0) {
                out |= 1 << id;
            }
        }
        out
    }

    pub fn is_upset(&self, mask: u32) -> bool {
        ids(mask).all(|id| self.parent_mask[id] & !mask == 0)
    }

    /// Möbius function `μ(top, ·)` on the interval below `top`, indexed like
    /// [`upsets`](Self::upsets) and zero outside the interval. Computed from
    /// the recursion `μ(A, A) = 1`, `μ(A, B) = −Σ_{B ⊊ A' ⊆ A} μ(A, A')`.
    pub fn mobius_row(&self, top: usize) -> Vec<i64> {
        let below: Vec<usize> = (0..=top).filter(|&b| self.contains(top, b)).collect();
        let mut mu = vec![0i64; self.len()];
        for (k, &b) in below.iter().enumerate().rev() {
            if b == top {
                mu[b] = 1;
                continue;
            }
            let mask = self.upsets[b];
            let s: i64 = below[k + 1..]
                .iter()
                .filter(|&&a| self.upsets[a] & mask == mask)
                .map(|&a| mu[a])
                .sum();
            mu[b] = -s;
        }
        mu
    }

    pub fn ids(&self, idx: usize) -> Vec<NodeId> {
        ids(self.upsets[idx]).collect()
    }
}

fn ids(mask: u32) -> impl Iterator<Item = NodeId> {
    (0..32).filter(move |i| mask & (1 << i) != 0)
}

/// Enumerates every upset of `tree`. Refuses trees with more than
/// [`MAX_LATTICE_NODES`] nodes or more than [`MAX_UPSETS`] upsets.
pub fn enumerate_upsets(tree: &ClusterTree) -> Result<UpsetLattice> {
    if tree.len() > MAX_LATTICE_NODES {
        return Err(Error::LatticeTooLarge { what: "node count", got: tree.len(), limit: MAX_LATTICE_NODES });
    }
    fn below(tree: &ClusterTree, id: NodeId) -> Result<Vec<u32>> {
        // Upsets of the subtree at `id`: empty, or `id` plus upsets of each child subtree.
        let mut with_root = vec![1u32 << id];
        for &c in &tree.node(id).children {
            let child = below(tree, c)?;
            with_root = product(&with_root, &child)?;
        }
        with_root.insert(0, 0);
        Ok(with_root)
    }
    fn product(a: &[u32], b: &[u32]) -> Result<Vec<u32>> {
        let got = a.len() * b.len();
        if got > MAX_UPSETS {
            return Err(Error::LatticeTooLarge { what: "upset count", got, limit: MAX_UPSETS });
        }
        Ok(a.iter().flat_map(|&x| b.iter().map(move |&y| x | y)).collect())
    }

    let mut upsets = vec![0u32];
    for &r in tree.roots() {
        upsets = product(&upsets, &below(tree, r)?)?;
    }
    upsets.sort_by_key(|&m| (m.count_ones(), m));
    let index = upsets.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let parent_mask = tree.nodes().iter().map(|n| n.parent.map_or(0, |p| 1u32 << p)).collect();
    let lattice = UpsetLattice { node_count: tree.len(), upsets, index, parent_mask };
    debug_assert!(lattice.upsets.iter().all(|&m| lattice.is_upset(m)));
    Ok(lattice)
}

/// `σ(mask) = Σ φ` over the minimal elements of `mask`.
pub fn tree_sigma<'a, T: Weight>(tree: &'a ClusterTree, phi: &'a [T]) -> impl Fn(u32) -> T + 'a {
    move |mask| {
        ids(mask)
            .filter(|&id| tree.node(id).children.iter().all(|&c| mask & (1 << c) == 0))
            .fold(T::zero(), |acc, id| acc + phi[id])
    }
}

/// Möbius weights `W_U`, aligned with the lattice's upset order.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsetWeights<T> {
    pub weights: Vec<T>,
    pub sigma: Vec<T>,
}

/// Inverts `sigma` on the lattice: `W_A = Σ_{A' ⊆ A} μ(A, A') σ(A')`.
///
/// Fails if σ decreases along a cover of the lattice, or if the weights do
/// not reproduce σ.
pub fn mobius_weights<T: Weight>(lattice: &UpsetLattice, sigma: impl Fn(u32) -> T) -> Result<UpsetWeights<T>> {
    let values: Vec<T> = lattice.upsets.iter().map(|&m| sigma(m)).collect();
    if let Some((smaller, larger)) = first_decrease(lattice, &values) {
        return Err(Error::NotIncreasing { smaller: lattice.ids(smaller), larger: lattice.ids(larger) });
    }
    let mut weights = Vec::with_capacity(lattice.len());
    for a in 0..lattice.len() {
        let mu = lattice.mobius_row(a);
        let w = (0..=a)
            .filter(|&b| mu[b] != 0)
            .fold(T::zero(), |acc, b| acc + T::from_int(mu[b]) * values[b]);
        weights.push(w);
    }
    for a in 0..lattice.len() {
        let rebuilt = (0..=a).filter(|&b| lattice.contains(a, b)).fold(T::zero(), |acc, b| acc + weights[b]);
        if !rebuilt.close(values[a]) {
            return Err(Error::Reconstruction { upset: lattice.ids(a) });
        }
    }
    Ok(UpsetWeights { weights, sigma: values })
}

/// First lattice cover `(smaller, larger)` along which σ decreases.
fn first_decrease<T: Weight>(lattice: &UpsetLattice, values: &[T]) -> Option<(usize, usize)> {
    for (a, &mask) in lattice.upsets.iter().enumerate() {
        for id in ids(mask) {
            if let Some(b) = lattice.index_of(mask & !(1 << id)) {
                if !non_negative(values[a] - values[b]) {
                    return Some((b, a));
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// σ decreases from an upset to an upset containing it.
    Monotonicity,
    /// `σ(∪ A_n) < Σ_{∅≠K} (−1)^{|K|+1} σ(∩_K A_n)`.
    InclusionExclusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Node ids of each upset in the witness collection.
    pub sets: Vec<Vec<NodeId>>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InclusionExclusionReport {
    pub collections_checked: usize,
    pub violations: Vec<Violation>,
}

/// Collections of at most this many upsets are checked exhaustively.
const EXHAUSTIVE_LATTICE: usize = 10;

/// Checks the inclusion-exclusion inequality on collections of upsets, plus
/// monotonicity along every lattice cover.
///
/// Lattices with at most ten upsets are checked over every collection of two
/// or more distinct upsets; larger ones over `sample_budget` random
/// collections of two to four upsets.
pub fn verify_inclusion_exclusion<T: Weight, R: Rng + ?Sized>(
    lattice: &UpsetLattice,
    sigma: impl Fn(u32) -> T,
    sample_budget: usize,
    rng: &mut R,
) -> InclusionExclusionReport {
    let mut report = InclusionExclusionReport::default();
    let values: Vec<T> = lattice.upsets.iter().map(|&m| sigma(m)).collect();

    for (a, &mask) in lattice.upsets.iter().enumerate() {
        for id in ids(mask) {
            if let Some(b) = lattice.index_of(mask & !(1 << id)) {
                if !non_negative(values[a] - values[b]) {
                    report.violations.push(Violation {
                        kind: ViolationKind::Monotonicity,
                        sets: vec![lattice.ids(b), lattice.ids(a)],
                        lhs: values[b].to_f64(),
                        rhs: values[a].to_f64(),
                    });
                }
            }
        }
    }

    let check = |collection: &[usize], report: &mut InclusionExclusionReport| {
        report.collections_checked += 1;
        let masks: Vec<u32> = collection.iter().map(|&i| lattice.upsets[i]).collect();
        let union = masks.iter().fold(0, |acc, m| acc | m);
        let lhs = sigma(union);
        let mut rhs = T::zero();
        for k in 1u32..(1 << masks.len()) {
            let inter = ids(k).fold(u32::MAX, |acc, i| acc & masks[i]);
            let term = sigma(inter);
            rhs = if k.count_ones() % 2 == 1 { rhs + term } else { rhs - term };
        }
        if !non_negative(lhs - rhs) {
            report.violations.push(Violation {
                kind: ViolationKind::InclusionExclusion,
                sets: collection.iter().map(|&i| lattice.ids(i)).collect(),
                lhs: lhs.to_f64(),
                rhs: rhs.to_f64(),
            });
        }
    };

    let n = lattice.len();
    if n <= EXHAUSTIVE_LATTICE {
        for pick in 1u32..(1 << n) {
            if pick.count_ones() >= 2 {
                let collection: Vec<usize> = ids(pick).collect();
                check(&collection, &mut report);
            }
        }
    } else {
        for _ in 0..sample_budget {
            let k = rng.random_range(2..=4);
            let collection: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
            check(&collection, &mut report);
        }
    }
    report
}

/// Pairwise weights `w_ij` with `σ(A) = Σ_{i,j∈A} w_ij` on every upset.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseWeights<T> {
    pub lattice: UpsetLattice,
    pub upset: UpsetWeights<T>,
    /// Symmetric `m × m` matrix, row-major.
    pub pairwise: Vec<T>,
    pub node_count: usize,
    /// `Σ_{i,j} w_ij`, equal to σ of the full hypothesis set.
    pub total: T,
}

impl<T: Weight> PairwiseWeights<T> {
    pub fn get(&self, i: NodeId, j: NodeId) -> T {
        self.pairwise[i * self.node_count + j]
    }
}

impl PartialEq for UpsetLattice {
    fn eq(&self, other: &Self) -> bool {
        self.upsets == other.upsets && self.node_count == other.node_count
    }
}

/// Builds `w_ii = W_{up(i)}` and `w_ij = w_ji = W_{up(i,j)} / 2` for
/// incomparable `i, j`, then checks every property the construction relies
/// on: non-negative upset weights, zero weight on upsets with three or more
/// minimal elements, pairwise reconstruction of σ on every upset, and
/// `Σ w_ij = σ(all)`.
pub fn pairwise_weights<T: Weight>(tree: &ClusterTree, phi: &[T]) -> Result<PairwiseWeights<T>> {
    if phi.len() != tree.len() {
        return Err(Error::WeightLength { expected: tree.len(), got: phi.len() });
    }
    let lattice = enumerate_upsets(tree)?;
    let sigma = tree_sigma(tree, phi);
    let upset = mobius_weights(&lattice, &sigma)?;
    let m = tree.len();
    let mut pairwise = vec![T::zero(); m * m];
    for (u, &mask) in lattice.upsets.iter().enumerate() {
        let w = upset.weights[u];
        if !non_negative(w) {
            return Err(Error::NegativeSubsetWeight { upset: lattice.ids(u) });
        }
        let min: Vec<NodeId> = ids(lattice.minimal(mask, tree)).collect();
        match min[..] {
            [] => {}
            [i] => pairwise[i * m + i] = w,
            [i, j] => {
                pairwise[i * m + j] = w.half();
                pairwise[j * m + i] = w.half();
            }
            _ => {
                if !w.close(T::zero()) {
                    return Err(Error::HigherOrderWeight { upset: lattice.ids(u) });
                }
            }
        }
    }
    for (u, &mask) in lattice.upsets.iter().enumerate() {
        let members: Vec<NodeId> = ids(mask).collect();
        let rebuilt = members
            .iter()
            .flat_map(|&i| members.iter().map(move |&j| (i, j)))
            .fold(T::zero(), |acc, (i, j)| acc + pairwise[i * m + j]);
        if !rebuilt.close(upset.sigma[u]) {
            return Err(Error::Reconstruction { upset: members });
        }
    }
    let total = pairwise.iter().fold(T::zero(), |acc, &w| acc + w);
    let full = *upset.sigma.last().expect("lattice holds the full set");
    if !total.close(full) {
        return Err(Error::Reconstruction { upset: (0..m).collect() });
    }
    Ok(PairwiseWeights { lattice, upset, pairwise, node_count: m, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{self, HypothesisSet, Merge, SizingWeights};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type Q = Ratio<i64>;

    fn q(n: i64, d: i64) -> Q {
        Ratio::new(n, d)
    }

    fn three() -> ClusterTree {
        ClusterTree::from_merges(2, &[Merge { left: 0, right: 1, height: 0.5 }]).unwrap()
    }

    fn exact_phi(tree: &ClusterTree) -> Vec<Q> {
        SizingWeights::inverse_size(tree).exact().unwrap().to_vec()
    }

    /// Independent route to the upset weights: `W_A = σ(A) − Σ_{U ⊊ A} W_U`.
    fn subtraction_weights(lattice: &UpsetLattice, sigma: impl Fn(u32) -> Q) -> Vec<Q> {
        let mut w: Vec<Q> = Vec::new();
        for a in 0..lattice.len() {
            let below = (0..a).filter(|&b| lattice.contains(a, b)).fold(Q::zero(), |acc, b| acc + w[b]);
            w.push(sigma(lattice.upsets()[a]) - below);
        }
        w
    }

    /// Upsets counted through antichains: every upset is generated by its
    /// set of minimal elements and vice versa.
    fn antichain_count(tree: &ClusterTree) -> usize {
        let m = tree.len();
        (0u32..(1 << m))
            .filter(|&mask| {
                let members: Vec<usize> = ids(mask).collect();
                members.iter().all(|&a| members.iter().all(|&b| a == b || !tree.encloses(a, b)))
            })
            .count()
    }

    #[test]
    fn enumerate_examples() {
        let single = ClusterTree::flat(1).unwrap();
        assert_eq!(enumerate_upsets(&single).unwrap().upsets(), &[0, 1]);

        let t = three();
        let l = enumerate_upsets(&t).unwrap();
        // ∅, {R}, {R,L1}, {R,L2}, {R,L1,L2}
        assert_eq!(l.upsets(), &[0b000, 0b100, 0b101, 0b110, 0b111]);
        for &m in l.upsets() {
            let set = HypothesisSet::from_ids(3, ids(m)).unwrap();
            assert!(lattice::is_upset(&set, &t).unwrap());
        }

        assert_eq!(enumerate_upsets(&ClusterTree::flat(2).unwrap()).unwrap().len(), 4);
    }

    #[test]
    fn guard_refuses_large_trees() {
        let big = ClusterTree::flat(17).unwrap();
        assert!(matches!(enumerate_upsets(&big), Err(Error::LatticeTooLarge { what: "node count", .. })));
        let wide = ClusterTree::flat(13).unwrap();
        assert!(matches!(enumerate_upsets(&wide), Err(Error::LatticeTooLarge { what: "upset count", .. })));
    }

    #[test]
    fn mobius_three_node_example() {
        let t = three();
        let l = enumerate_upsets(&t).unwrap();
        let phi = exact_phi(&t);
        let w = mobius_weights(&l, tree_sigma(&t, &phi)).unwrap();
        assert_eq!(w.weights, vec![q(0, 1), q(1, 2), q(1, 2), q(1, 2), q(1, 2)]);
        assert_eq!(*w.sigma.last().unwrap(), q(2, 1));
        // Inclusion-exclusion cross-check of the top weight: 2 − 1 − 1 + ½.
        assert_eq!(w.weights[4], q(2, 1) - q(1, 1) - q(1, 1) + q(1, 2));
        assert_eq!(w.weights, subtraction_weights(&l, tree_sigma(&t, &phi)));
    }

    #[test]
    fn mobius_single_and_flat() {
        let single = ClusterTree::flat(1).unwrap();
        let l = enumerate_upsets(&single).unwrap();
        let w = mobius_weights(&l, tree_sigma(&single, &[q(1, 1)])).unwrap();
        assert_eq!(w.weights, vec![q(0, 1), q(1, 1)]);

        let flat = ClusterTree::flat(4).unwrap();
        let l = enumerate_upsets(&flat).unwrap();
        let w = mobius_weights(&l, tree_sigma(&flat, &exact_phi(&flat))).unwrap();
        for (u, &mask) in l.upsets().iter().enumerate() {
            let expected = if mask.count_ones() == 1 { q(1, 1) } else { q(0, 1) };
            assert_eq!(w.weights[u], expected, "upset {mask:b}");
        }
        // Additive σ with unequal weights returns the singleton weights.
        let phi = [q(1, 3), q(2, 1), q(5, 7), q(1, 1)];
        let w = mobius_weights(&l, tree_sigma(&flat, &phi)).unwrap();
        for (u, &mask) in l.upsets().iter().enumerate() {
            let expected = if mask.count_ones() == 1 { phi[mask.trailing_zeros() as usize] } else { q(0, 1) };
            assert_eq!(w.weights[u], expected);
        }
    }

    #[test]
    fn non_increasing_sigma_is_rejected() {
        let t = three();
        let l = enumerate_upsets(&t).unwrap();
        // φ_R = 1 > φ_L1 = 0.2
        let phi = [q(1, 5), q(1, 1), q(1, 1)];
        let err = mobius_weights(&l, tree_sigma(&t, &phi)).unwrap_err();
        assert_eq!(err, Error::NotIncreasing { smaller: vec![2], larger: vec![0, 2] });
    }

    #[test]
    fn inclusion_exclusion_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = three();
        let l = enumerate_upsets(&t).unwrap();
        let report = verify_inclusion_exclusion(&l, tree_sigma(&t, &exact_phi(&t)), 0, &mut rng);
        // 2^5 − 5 − 1 collections of two or more upsets.
        assert_eq!(report.collections_checked, 26);
        assert!(report.violations.is_empty());

        let flat = ClusterTree::flat(3).unwrap();
        let l = enumerate_upsets(&flat).unwrap();
        let report = verify_inclusion_exclusion(&l, |m: u32| q(m.count_ones() as i64, 1), 0, &mut rng);
        assert!(report.violations.is_empty());

        let bad = [q(1, 5), q(1, 1), q(1, 1)];
        let l = enumerate_upsets(&t).unwrap();
        let report = verify_inclusion_exclusion(&l, tree_sigma(&t, &bad), 0, &mut rng);
        assert!(report.violations.iter().any(|v| v.kind == ViolationKind::Monotonicity));

        // A σ that is increasing but supermodular-violating: σ collapses on the union.
        let flat2 = ClusterTree::flat(2).unwrap();
        let l = enumerate_upsets(&flat2).unwrap();
        let sub = |m: u32| if m == 0 { q(0, 1) } else { q(1, 1) };
        let report = verify_inclusion_exclusion(&l, sub, 0, &mut rng);
        let ie: Vec<_> = report.violations.iter().filter(|v| v.kind == ViolationKind::InclusionExclusion).collect();
        assert!(!ie.is_empty());
        assert!(ie[0].lhs < ie[0].rhs);
    }

    #[test]
    fn pairwise_examples() {
        let t = three();
        let pw = pairwise_weights(&t, &exact_phi(&t)).unwrap();
        assert_eq!(pw.get(2, 2), q(1, 2));
        assert_eq!(pw.get(0, 0), q(1, 2));
        assert_eq!(pw.get(1, 1), q(1, 2));
        assert_eq!(pw.get(0, 1) + pw.get(1, 0), q(1, 2));
        assert_eq!(pw.get(0, 2), q(0, 1));
        assert_eq!(pw.get(1, 2), q(0, 1));
        assert_eq!(pw.total, q(2, 1));

        let single = ClusterTree::flat(1).unwrap();
        assert_eq!(pairwise_weights(&single, &[q(1, 1)]).unwrap().get(0, 0), q(1, 1));

        let four = ClusterTree::from_merges(
            4,
            &[
                Merge { left: 0, right: 1, height: 0.1 },
                Merge { left: 2, right: 3, height: 0.2 },
                Merge { left: 4, right: 5, height: 0.3 },
            ],
        )
        .unwrap();
        let pw = pairwise_weights(&four, &exact_phi(&four)).unwrap();
        assert_eq!(pw.total, q(4, 1));
        assert_eq!(pw.lattice.len(), 26);

        // Float weights take the tolerance path.
        let pwf = pairwise_weights(&four, SizingWeights::inverse_size(&four).phi()).unwrap();
        assert!((pwf.total - 4.0).abs() < 1e-9);
    }

    #[test]
    fn mobius_interval_identity_on_four_leaves() {
        let four = ClusterTree::from_merges(
            4,
            &[
                Merge { left: 0, right: 1, height: 0.1 },
                Merge { left: 4, right: 2, height: 0.2 },
                Merge { left: 5, right: 3, height: 0.3 },
            ],
        )
        .unwrap();
        let l = enumerate_upsets(&four).unwrap();
        assert_eq!(l.len(), antichain_count(&four));
        let rows: Vec<Vec<i64>> = (0..l.len()).map(|a| l.mobius_row(a)).collect();
        for a in 0..l.len() {
            for b in 0..l.len() {
                if !l.contains(a, b) {
                    continue;
                }
                // Σ_{B ⊆ C ⊆ A} μ(C, B) = [B = A]
                let s: i64 = (0..l.len()).filter(|&c| l.contains(a, c) && l.contains(c, b)).map(|c| rows[c][b]).sum();
                assert_eq!(s, i64::from(a == b));
            }
        }
    }

    #[test]
    fn eight_leaf_counts() {
        let balanced: Vec<Merge> = [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9), (10, 11), (12, 13)]
            .iter()
            .enumerate()
            .map(|(k, &(left, right))| Merge { left, right, height: k as f64 })
            .collect();
        let t = ClusterTree::from_merges(8, &balanced).unwrap();
        let pw = pairwise_weights(&t, &exact_phi(&t)).unwrap();
        assert_eq!(pw.lattice.len(), 677);
        assert_eq!(pw.total, q(8, 1));

        let mut chain = vec![Merge { left: 0, right: 1, height: 0.0 }];
        for k in 2..8 {
            chain.push(Merge { left: 8 + k - 2, right: k, height: k as f64 });
        }
        let t = ClusterTree::from_merges(8, &chain).unwrap();
        let pw = pairwise_weights(&t, &exact_phi(&t)).unwrap();
        assert_eq!(pw.lattice.len(), 383);
        assert_eq!(pw.total, q(8, 1));
    }

    fn arb_small_tree() -> impl Strategy<Value = ClusterTree> {
        lattice::tests::arb_tree(6)
    }

    proptest! {
        #[test]
        fn decomposition_properties(t in arb_small_tree()) {
            let l = enumerate_upsets(&t).unwrap();
            prop_assert_eq!(l.len(), antichain_count(&t));
            let phi = exact_phi(&t);
            let w = mobius_weights(&l, tree_sigma(&t, &phi)).unwrap();
            prop_assert_eq!(&w.weights, &subtraction_weights(&l, tree_sigma(&t, &phi)));
            for (u, &mask) in l.upsets().iter().enumerate() {
                prop_assert!(w.weights[u] >= Q::zero());
                if l.minimal(mask, &t).count_ones() >= 3 {
                    prop_assert_eq!(w.weights[u], Q::zero());
                }
            }
            let pw = pairwise_weights(&t, &phi).unwrap();
            let full = HypothesisSet::full(t.len());
            prop_assert_eq!(pw.total, lattice::sigma_with(&full, &t, &phi).unwrap());
        }
    }
}
