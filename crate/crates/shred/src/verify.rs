//! Randomized check of the pairwise decomposition on small trees.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use shred_core::decomposition::{self, ViolationKind};
use shred_core::{ClusterTree, Merge};

use crate::error::ShredError;
use crate::io::{VerifyReport, VerifyViolation};

/// Largest leaf count the exact lattice is built for.
pub const MAX_LEAVES: usize = 8;
/// Random collections per tree for the inclusion-exclusion check.
pub const SAMPLE_BUDGET: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub leaves_max: usize,
    pub trees: usize,
    pub seed: u64,
    /// Gives every root φ = 2, which breaks monotonicity below it.
    pub inject_nonmonotone: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { leaves_max: MAX_LEAVES, trees: 200, seed: 0, inject_nonmonotone: false }
    }
}

/// A full bifurcating tree on `1..=leaves_max` leaves built by merging
/// uniformly chosen pairs of clusters.
pub fn random_tree<R: Rng + ?Sized>(leaves_max: usize, rng: &mut R) -> ClusterTree {
    let leaves = rng.random_range(1..=leaves_max);
    let mut active: Vec<usize> = (0..leaves).collect();
    let mut merges = Vec::with_capacity(leaves - 1);
    while active.len() > 1 {
        let a = active.swap_remove(rng.random_range(0..active.len()));
        let b = active.swap_remove(rng.random_range(0..active.len()));
        merges.push(Merge { left: a.min(b), right: a.max(b), height: merges.len() as f64 + 1.0 });
        active.push(leaves + merges.len() - 1);
    }
    ClusterTree::from_merges(leaves, &merges).expect("merges of distinct active clusters form a tree")
}

/// `φ_C = 1/|C|` as exact rationals.
pub fn inverse_size_phi(tree: &ClusterTree) -> Vec<Ratio<i64>> {
    tree.nodes().iter().map(|n| Ratio::new(1, n.members.len() as i64)).collect()
}

pub fn run_verification(options: VerifyOptions) -> Result<VerifyReport, ShredError> {
    if options.leaves_max == 0 || options.leaves_max > MAX_LEAVES {
        return Err(ShredError::Input(format!(
            "leaves_max = {} is outside the verifiable range 1..={MAX_LEAVES}",
            options.leaves_max
        )));
    }
    let per_tree: Vec<(usize, usize, Vec<VerifyViolation>)> = (0..options.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(t as u64);
            check_tree(t, options, &mut rng)
        })
        .collect::<Result<_, ShredError>>()?;

    let mut report =
        VerifyReport { trees_checked: options.trees, leaves_max: options.leaves_max, seed: options.seed, ..Default::default() };
    for (upsets, collections, violations) in per_tree {
        report.upsets_checked += upsets;
        report.collections_checked += collections;
        report.violations.extend(violations);
    }
    Ok(report)
}

fn check_tree(
    index: usize,
    options: VerifyOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize, Vec<VerifyViolation>), ShredError> {
    let tree = random_tree(options.leaves_max, rng);
    let leaves = tree.leaf_count();
    let mut phi = inverse_size_phi(&tree);
    if options.inject_nonmonotone {
        for &r in tree.roots() {
            phi[r] = Ratio::from_integer(2);
        }
    }
    let lattice = decomposition::enumerate_upsets(&tree)?;
    let sigma = decomposition::tree_sigma(&tree, &phi);
    let ie = decomposition::verify_inclusion_exclusion(&lattice, &sigma, SAMPLE_BUDGET, rng);

    let violation = |kind: &str, upsets: Vec<Vec<usize>>, detail: String| VerifyViolation {
        tree: index,
        leaves,
        kind: kind.to_string(),
        upsets,
        detail,
    };
    let mut violations: Vec<VerifyViolation> = ie
        .violations
        .iter()
        .map(|v| {
            let kind = match v.kind {
                ViolationKind::Monotonicity => "monotonicity",
                ViolationKind::InclusionExclusion => "inclusion_exclusion",
            };
            violation(kind, v.sets.clone(), format!("lhs {} < rhs {}", v.lhs, v.rhs))
        })
        .collect();

    if let Err(e) = decomposition::pairwise_weights(&tree, &phi) {
        use shred_core::Error as E;
        let detail = e.to_string();
        let (kind, upsets) = match e {
            E::NotIncreasing { smaller, larger } => ("not_increasing", vec![smaller, larger]),
            E::NegativeSubsetWeight { upset } => ("negative_weight", vec![upset]),
            E::HigherOrderWeight { upset } => ("higher_order_weight", vec![upset]),
            E::Reconstruction { upset } => ("reconstruction", vec![upset]),
            other => return Err(other.into()),
        };
        violations.push(violation(kind, upsets, detail));
    }
    Ok((lattice.len(), ie.collections_checked, violations))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_trees_are_full_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let t = random_tree(8, &mut rng);
            assert_eq!(t.len(), 2 * t.leaf_count() - 1);
            assert_eq!(t.roots().len(), 1);
        }
    }

    #[test]
    fn small_run_is_clean_and_reproducible() {
        let options = VerifyOptions { trees: 20, seed: 9, ..Default::default() };
        let a = run_verification(options).unwrap();
        assert!(a.violations.is_empty(), "{:?}", a.violations);
        assert_eq!(a.trees_checked, 20);
        assert_eq!(a, run_verification(options).unwrap());
    }

    #[test]
    fn injected_phi_is_caught() {
        let options = VerifyOptions { trees: 10, seed: 1, inject_nonmonotone: true, ..Default::default() };
        let report = run_verification(options).unwrap();
        assert!(report.violations.iter().any(|v| v.kind == "not_increasing"));
        assert!(report.violations.iter().any(|v| v.kind == "monotonicity"));
    }

    #[test]
    fn guard() {
        let options = VerifyOptions { leaves_max: 9, ..Default::default() };
        assert_eq!(run_verification(options).unwrap_err().exit_code(), 2);
        let empty = run_verification(VerifyOptions { trees: 0, ..Default::default() }).unwrap();
        assert_eq!(empty.trees_checked, 0);
        assert!(empty.violations.is_empty());
    }
}
