//! Clustering, cluster p-values and step-up selection composed over one
//! dataset.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use shred_core::clustering::{self, Linkage};
use shred_core::{ClusterTree, PValues, Procedure, SelectionResult, SizingWeights, SlopeRule};

use crate::error::ShredError;

/// A selection method: a slope rule run by one of the step-up procedures.
///
/// BH and BY run on the flat family of singleton hypotheses; every other
/// rule runs on the cluster tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub rule: SlopeRule,
    /// Defaults to `mglsup` for `SHREDDER_PPRDS` and `glsup` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub procedure: Option<Procedure>,
}

impl MethodSpec {
    pub fn new(rule: SlopeRule) -> Self {
        Self { rule, procedure: None }
    }

    pub fn procedure(&self) -> Procedure {
        self.procedure.unwrap_or(match self.rule {
            SlopeRule::ShredderPprds => Procedure::Mglsup,
            _ => Procedure::Glsup,
        })
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.rule, SlopeRule::Bh | SlopeRule::By)
    }

    /// Method column of the metrics table.
    pub fn label(&self) -> String {
        let base = match self.rule {
            SlopeRule::Bh => "BH",
            SlopeRule::By => "BY",
            SlopeRule::ShredderPprds => "SHREDDER",
            _ => "SHRED",
        };
        match self.procedure {
            Some(p) if p != MethodSpec::new(self.rule).procedure() => format!("{base}/{}", p.name()),
            _ => base.to_string(),
        }
    }

    /// Rule column of the metrics table.
    pub fn rule_label(&self) -> String {
        match self.rule {
            SlopeRule::Bh | SlopeRule::ShredPrds => "PRDS".into(),
            SlopeRule::By | SlopeRule::ShredArbitrary => "Arbitrary".into(),
            SlopeRule::ShredderPprds => "PPRDS".into(),
            SlopeRule::Heuristic => "Heuristic".into(),
            SlopeRule::Explicit(a) => format!("alpha={a}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TreeOptions {
    pub linkage: Linkage,
    /// Correlation threshold for [`clustering::cut_tree`].
    pub corr_cut: Option<f64>,
}

/// Clusters the columns of `x`.
pub fn build_tree(x: &DMatrix<f64>, options: TreeOptions) -> Result<ClusterTree, shred_core::Error> {
    let corr = clustering::correlation_matrix(x.as_slice(), x.nrows(), x.ncols())?;
    let tree = clustering::hierarchical_cluster(&corr, options.linkage)?;
    match options.corr_cut {
        Some(t) => clustering::cut_tree(&tree, t),
        None => Ok(tree),
    }
}

/// A hypothesis family with its p-values, ready for step-up.
#[derive(Debug, Clone)]
pub struct Family {
    pub tree: ClusterTree,
    pub weights: SizingWeights,
    pub pvalues: PValues,
}

impl Family {
    pub fn new(tree: ClusterTree, pvalues: Vec<f64>) -> Result<Self, ShredError> {
        let weights = SizingWeights::inverse_size(&tree);
        Ok(Self { tree, weights, pvalues: PValues::new(pvalues)? })
    }

    /// Singleton hypotheses only, with the tree's leaf p-values.
    pub fn flatten(&self) -> Result<Self, ShredError> {
        let p = self.tree.leaf_count();
        let values = (0..p).map(|i| self.pvalues.as_slice()[self.tree.leaf(i)]).collect();
        Family::new(ClusterTree::flat(p)?, values)
    }

    pub fn select(&self, rule: SlopeRule, procedure: Procedure, q: f64) -> Result<SelectionResult, ShredError> {
        Ok(shred_core::stepup::select(procedure, &self.pvalues, &self.tree, &self.weights, rule, q)?)
    }
}

/// Runs `method` on the tree family, or on `flat` for BH and BY.
pub fn run_method(method: &MethodSpec, tree: &Family, flat: &Family, q: f64) -> Result<SelectionResult, ShredError> {
    let family = if method.is_flat() { flat } else { tree };
    family.select(method.rule, method.procedure(), q)
}
