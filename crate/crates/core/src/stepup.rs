//! Generalized linear step-up procedures and their threshold slopes.
//!
//! For a cut-off `c` let `I_c = {i : P_i ≤ c}`. The procedure finds
//! `c_max = sup { c ∈ [0, 1] : σ(closure(I_c)) ≥ α·c }` and rejects
//! `closure(I_{c_max})`. `σ(closure(I_c))` is a right-continuous step
//! function of `c` that only changes at observed p-values, so the supremum is
//! found exactly by one pass over the sorted distinct p-values.

use alloc::vec;
use alloc::vec::Vec;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};
use crate::lattice::{self, ClusterTree, HypothesisSet, NodeId, SizingWeights};

/// One conservative p-value per hypothesis, indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct PValues(Vec<f64>);

impl PValues {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((id, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::PValueRange { id, value });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    fn check(&self, tree: &ClusterTree) -> Result<()> {
        if self.0.len() != tree.len() {
            return Err(Error::PValueLength { expected: tree.len(), got: self.0.len() });
        }
        Ok(())
    }
}

/// How the threshold slope `α` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "SCREAMING_SNAKE_CASE")
)]
pub enum SlopeRule {
    /// `m / q`.
    Bh,
    /// `m·H_m / q`.
    By,
    /// Arbitrary dependence among p-values.
    ShredArbitrary,
    /// `Σφ / q`, valid under PRDS.
    ShredPrds,
    /// `σ(all) / q`, valid for modified p-values under pairwise PRDS.
    ShredderPprds,
    /// `p / q` with `p` predictors; no guarantee.
    Heuristic,
    Explicit(f64),
}

impl SlopeRule {
    pub fn name(&self) -> &'static str {
        match self {
            SlopeRule::Bh => "BH",
            SlopeRule::By => "BY",
            SlopeRule::ShredArbitrary => "SHRED_ARBITRARY",
            SlopeRule::ShredPrds => "SHRED_PRDS",
            SlopeRule::ShredderPprds => "SHREDDER_PPRDS",
            SlopeRule::Heuristic => "HEURISTIC",
            SlopeRule::Explicit(_) => "EXPLICIT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum Procedure {
    /// Step-up on the raw p-values, closing the rejected set afterwards.
    Glsup,
    /// Step-up on p-values monotonized along root paths.
    Mglsup,
}

impl Procedure {
    pub fn name(&self) -> &'static str {
        match self {
            Procedure::Glsup => "glsup",
            Procedure::Mglsup => "mglsup",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub rule: SlopeRule,
    pub procedure: Procedure,
    pub q: f64,
    pub alpha: f64,
    pub c_max: f64,
    /// Upward-closed set of rejected hypotheses.
    pub rejected: HypothesisSet,
    /// Minimal rejected nodes, in increasing id order.
    pub selected: Vec<NodeId>,
    /// Member sets of `selected`.
    pub selected_sets: Vec<Vec<usize>>,
    pub used_modified_pvalues: bool,
    /// False when the slope carries no gFDR guarantee for this procedure.
    pub guaranteed: bool,
}

#[cfg(feature = "serde")]
impl serde::Serialize for SelectionResult {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("SelectionResult", 8)?;
        s.serialize_field("rule", self.rule.name())?;
        s.serialize_field("procedure", &self.procedure)?;
        s.serialize_field("q", &self.q)?;
        s.serialize_field("alpha", &self.alpha)?;
        s.serialize_field("c_max", &self.c_max)?;
        s.serialize_field("selected_sets", &self.selected_sets)?;
        s.serialize_field("rejected_node_ids", &self.rejected.to_vec())?;
        s.serialize_field("guaranteed", &self.guaranteed)?;
        s.end()
    }
}

fn check_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(q))
    }
}

pub fn alpha_bh(m: usize, q: f64) -> Result<f64> {
    check_level(q)?;
    if m == 0 {
        return Err(Error::NoHypotheses);
    }
    Ok(m as f64 / q)
}

pub fn alpha_by(m: usize, q: f64) -> Result<f64> {
    let harmonic: f64 = (1..=m).map(|j| 1.0 / j as f64).sum();
    Ok(alpha_bh(m, q)? * harmonic)
}

/// Slope for arbitrarily dependent p-values, with all hypotheses standing in
/// for the unknown true nulls:
/// `[(Σφ)(1 + ln σ(all)) − Σ φ ln φ] / q`.
pub fn alpha_shred_arbitrary(weights: &SizingWeights, tree: &ClusterTree, q: f64) -> Result<f64> {
    check_level(q)?;
    if let Some(id) = weights.phi().iter().position(|&w| w <= 0.0) {
        return Err(Error::ZeroWeight { id });
    }
    let size = total_size(weights, tree)?;
    let entropy: f64 = weights.phi().iter().map(|&w| w * libm::log(w)).sum();
    Ok((weights.total() * (1.0 + libm::log(size)) - entropy) / q)
}

pub fn alpha_shred_prds(weights: &SizingWeights, q: f64) -> Result<f64> {
    check_level(q)?;
    Ok(weights.total() / q)
}

/// `σ(all hypotheses) / q`. The tree type already guarantees the
/// bifurcating cover condition.
pub fn alpha_shredder(weights: &SizingWeights, tree: &ClusterTree, q: f64) -> Result<f64> {
    check_level(q)?;
    Ok(total_size(weights, tree)? / q)
}

pub fn alpha_heuristic(predictors: usize, q: f64) -> Result<f64> {
    alpha_bh(predictors, q)
}

fn total_size(weights: &SizingWeights, tree: &ClusterTree) -> Result<f64> {
    lattice::sigma(&HypothesisSet::full(tree.len()), tree, weights)
}

pub fn resolve_alpha(rule: SlopeRule, tree: &ClusterTree, weights: &SizingWeights, q: f64) -> Result<f64> {
    match rule {
        SlopeRule::Bh => alpha_bh(tree.len(), q),
        SlopeRule::By => alpha_by(tree.len(), q),
        SlopeRule::ShredArbitrary => alpha_shred_arbitrary(weights, tree, q),
        SlopeRule::ShredPrds => alpha_shred_prds(weights, q),
        SlopeRule::ShredderPprds => alpha_shredder(weights, tree, q),
        SlopeRule::Heuristic => alpha_heuristic(tree.leaf_count(), q),
        SlopeRule::Explicit(alpha) => {
            check_level(q)?;
            check_slope(alpha)?;
            Ok(alpha)
        }
    }
}

fn check_slope(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSlope(alpha))
    }
}

/// Incrementally maintained σ of a growing hypothesis set.
struct SigmaTracker<'a> {
    tree: &'a ClusterTree,
    phi: &'a [f64],
    in_set: FixedBitSet,
    has_descendant: FixedBitSet,
    value: f64,
}

impl<'a> SigmaTracker<'a> {
    fn new(tree: &'a ClusterTree, weights: &'a SizingWeights) -> Self {
        Self {
            tree,
            phi: weights.phi(),
            in_set: FixedBitSet::with_capacity(tree.len()),
            has_descendant: FixedBitSet::with_capacity(tree.len()),
            value: 0.0,
        }
    }

    fn insert(&mut self, id: NodeId) {
        if self.in_set.put(id) {
            return;
        }
        if !self.has_descendant.contains(id) {
            self.value += self.phi[id];
        }
        for a in self.tree.ancestors(id) {
            if self.has_descendant.put(a) {
                break;
            }
            // At most one ancestor can be minimal; it stops being so now.
            if self.in_set.contains(a) {
                self.value -= self.phi[a];
            }
        }
    }
}

/// Sweeps the sorted p-values and returns `(c_max, I_{c_max})` before closure.
fn sweep(p: &PValues, tree: &ClusterTree, weights: &SizingWeights, alpha: f64) -> Result<(f64, HypothesisSet)> {
    check_slope(alpha)?;
    p.check(tree)?;
    let values = p.as_slice();
    let mut order: Vec<NodeId> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let mut tracker = SigmaTracker::new(tree, weights);
    // (prefix length, next distinct p-value) of the last feasible level.
    let mut best: Option<(usize, f64)> = None;
    let mut start = 0;
    while start < order.len() {
        let level = values[order[start]];
        let mut end = start;
        while end < order.len() && values[order[end]] == level {
            tracker.insert(order[end]);
            end += 1;
        }
        let size = tracker.value;
        if size >= alpha * level {
            let next = order.get(end).map_or(1.0, |&i| values[i]);
            best = Some((end, next));
        }
        start = end;
    }

    let mut rejected = HypothesisSet::empty(tree.len());
    let c_max = match best {
        Some((end, next)) => {
            for &id in &order[..end] {
                rejected.insert(id);
            }
            // Evaluate the final size directly so c_max does not carry the
            // tracker's summation order.
            (lattice::sigma(&rejected, tree, weights)? / alpha).min(next)
        }
        None => 0.0,
    };
    Ok((c_max, rejected))
}

/// `c_max` and the rejected (closed) set for a fixed slope.
pub fn compute_c_max(
    p: &PValues,
    tree: &ClusterTree,
    weights: &SizingWeights,
    alpha: f64,
) -> Result<(f64, HypothesisSet)> {
    let (c_max, raw) = sweep(p, tree, weights, alpha)?;
    Ok((c_max, lattice::closure(&raw, tree)?))
}

/// `P'_C = max` of `P` over `C` and every cluster enclosing it.
pub fn monotonize_pvalues(p: &PValues, tree: &ClusterTree) -> Result<PValues> {
    p.check(tree)?;
    let values = p.as_slice();
    let mut out = vec![0.0; values.len()];
    let mut stack: Vec<(NodeId, f64)> = tree.roots().iter().map(|&r| (r, 0.0)).collect();
    while let Some((id, above)) = stack.pop() {
        let v = values[id].max(above);
        out[id] = v;
        stack.extend(tree.node(id).children.iter().map(|&c| (c, v)));
    }
    Ok(PValues(out))
}

/// Procedure 1: step-up on raw p-values.
pub fn glsup(
    p: &PValues,
    tree: &ClusterTree,
    weights: &SizingWeights,
    rule: SlopeRule,
    q: f64,
) -> Result<SelectionResult> {
    let alpha = resolve_alpha(rule, tree, weights, q)?;
    let (c_max, rejected) = compute_c_max(p, tree, weights, alpha)?;
    finish(tree, rule, Procedure::Glsup, q, alpha, c_max, rejected)
}

/// Procedure 2: step-up on monotonized p-values, whose threshold sets are
/// upward-closed already.
pub fn mglsup(
    p: &PValues,
    tree: &ClusterTree,
    weights: &SizingWeights,
    rule: SlopeRule,
    q: f64,
) -> Result<SelectionResult> {
    let alpha = resolve_alpha(rule, tree, weights, q)?;
    let modified = monotonize_pvalues(p, tree)?;
    let (c_max, raw) = sweep(&modified, tree, weights, alpha)?;
    let rejected = lattice::closure(&raw, tree)?;
    assert_eq!(rejected, raw, "threshold set of monotonized p-values is not upward-closed");
    finish(tree, rule, Procedure::Mglsup, q, alpha, c_max, rejected)
}

pub fn select(
    procedure: Procedure,
    p: &PValues,
    tree: &ClusterTree,
    weights: &SizingWeights,
    rule: SlopeRule,
    q: f64,
) -> Result<SelectionResult> {
    match procedure {
        Procedure::Glsup => glsup(p, tree, weights, rule, q),
        Procedure::Mglsup => mglsup(p, tree, weights, rule, q),
    }
}

fn finish(
    tree: &ClusterTree,
    rule: SlopeRule,
    procedure: Procedure,
    q: f64,
    alpha: f64,
    c_max: f64,
    rejected: HypothesisSet,
) -> Result<SelectionResult> {
    let selected = lattice::minimal_elements(&rejected, tree)?.to_vec();
    let selected_sets = selected.iter().map(|&id| tree.node(id).members.clone()).collect();
    let guaranteed = match rule {
        SlopeRule::Heuristic | SlopeRule::Explicit(_) => false,
        SlopeRule::ShredderPprds => procedure == Procedure::Mglsup,
        _ => true,
    };
    Ok(SelectionResult {
        rule,
        procedure,
        q,
        alpha,
        c_max,
        rejected,
        selected,
        selected_sets,
        used_modified_pvalues: procedure == Procedure::Mglsup,
        guaranteed,
    })
}

/// `{i : P_i ≤ c}`.
pub fn threshold_set(p: &PValues, c: f64) -> HypothesisSet {
    let values = p.as_slice();
    let mut set = HypothesisSet::empty(values.len());
    for (i, &v) in values.iter().enumerate() {
        if v <= c {
            set.insert(i);
        }
    }
    set
}
