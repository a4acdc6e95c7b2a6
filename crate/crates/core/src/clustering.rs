//! Correlation clustering of predictors into a bifurcating [`ClusterTree`].
//!
//! Dissimilarity is `1 − |r|`, so a column and its negation are treated as
//! the same predictor. Only the design matrix is used, never the response.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::lattice::{ClusterTree, Merge, NodeId, NodeSpec};

/// `p × p` Pearson correlations, symmetric with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    p: usize,
    values: Vec<f64>,
}

impl CorrelationMatrix {
    /// Row-major `p × p` values. Checks symmetry, the unit diagonal and the
    /// `[−1, 1]` range.
    pub fn new(p: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != p * p {
            return Err(Error::Shape { rows: p, cols: p, len: values.len() });
        }
        for i in 0..p {
            if values[i * p + i] != 1.0 {
                return Err(Error::NotACorrelationMatrix);
            }
            for j in 0..i {
                let r = values[i * p + j];
                if !(-1.0..=1.0).contains(&r) || r != values[j * p + i] {
                    return Err(Error::NotACorrelationMatrix);
                }
            }
        }
        Ok(Self { p, values })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Pearson correlations of the columns of a column-major `n × p` matrix.
pub fn correlation_matrix(data: &[f64], n: usize, p: usize) -> Result<CorrelationMatrix> {
    if data.len() != n * p {
        return Err(Error::Shape { rows: n, cols: p, len: data.len() });
    }
    if n < 2 {
        return Err(Error::TooFewObservations(n));
    }
    let mut centered = Vec::with_capacity(n * p);
    let mut norms = Vec::with_capacity(p);
    for j in 0..p {
        let col = &data[j * n..(j + 1) * n];
        let mean = col.iter().sum::<f64>() / n as f64;
        let scale = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let start = centered.len();
        centered.extend(col.iter().map(|x| x - mean));
        let ss: f64 = centered[start..].iter().map(|x| x * x).sum();
        let norm = libm::sqrt(ss);
        // Rounding leaves a residue of order eps·scale·√n on constant columns.
        if !(norm > 1e-12 * scale * libm::sqrt(n as f64)) {
            return Err(Error::ConstantColumn(j));
        }
        norms.push(norm);
    }
    let mut values = vec![0.0; p * p];
    for i in 0..p {
        values[i * p + i] = 1.0;
        let a = &centered[i * n..(i + 1) * n];
        for j in 0..i {
            let b = &centered[j * n..(j + 1) * n];
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values[i * p + j] = r;
            values[j * p + i] = r;
        }
    }
    CorrelationMatrix::new(p, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Linkage {
    #[default]
    Complete,
    Average,
    Single,
}

impl Linkage {
    pub fn name(self) -> &'static str {
        match self {
            Linkage::Complete => "complete",
            Linkage::Average => "average",
            Linkage::Single => "single",
        }
    }

    /// Lance-Williams update for the distance from `a ∪ b` to another cluster.
    fn update(self, d_a: f64, d_b: f64, n_a: usize, n_b: usize) -> f64 {
        match self {
            Linkage::Complete => d_a.max(d_b),
            Linkage::Single => d_a.min(d_b),
            Linkage::Average => (n_a as f64 * d_a + n_b as f64 * d_b) / (n_a + n_b) as f64,
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLinkage;

impl fmt::Display for UnknownLinkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("expected one of complete, average, single")
    }
}

impl core::error::Error for UnknownLinkage {}

impl FromStr for Linkage {
    type Err = UnknownLinkage;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        match s {
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            "single" => Ok(Linkage::Single),
            _ => Err(UnknownLinkage),
        }
    }
}

/// Agglomerative clustering on `1 − |r|`.
///
/// Leaf `i` is predictor `i`; the `k`-th merge creates node `p + k` at the
/// linkage distance of the two clusters it joins. Among equally close pairs
/// the one with the lexicographically smallest `(id, id)` is merged first.
pub fn hierarchical_cluster(corr: &CorrelationMatrix, linkage: Linkage) -> Result<ClusterTree> {
    let p = corr.dim();
    if p == 0 {
        return Err(Error::EmptyTree);
    }
    // Slot `s` holds the distances of the cluster currently stored there.
    let mut dist: Vec<f64> = corr.as_slice().iter().map(|r| 1.0 - r.abs()).collect();
    // Active clusters as (node id, slot, size, height), kept sorted by node id.
    let mut active: Vec<(NodeId, usize, usize, f64)> = (0..p).map(|i| (i, i, 1, 0.0)).collect();
    let mut merges = Vec::with_capacity(p.saturating_sub(1));

    while active.len() > 1 {
        let mut best = (f64::INFINITY, 0, 1);
        for x in 0..active.len() {
            for y in x + 1..active.len() {
                let d = dist[active[x].1 * p + active[y].1];
                if d < best.0 {
                    best = (d, x, y);
                }
            }
        }
        let (d, x, y) = best;
        let (id_a, slot_a, n_a, h_a) = active[x];
        let (id_b, slot_b, n_b, h_b) = active[y];
        for &(_, slot, _, _) in &active {
            if slot == slot_a || slot == slot_b {
                continue;
            }
            let v = linkage.update(dist[slot_a * p + slot], dist[slot_b * p + slot], n_a, n_b);
            dist[slot_a * p + slot] = v;
            dist[slot * p + slot_a] = v;
        }
        // Averaging can round a hair below a child's height.
        let height = d.max(h_a).max(h_b);
        merges.push(Merge { left: id_a, right: id_b, height });
        active.remove(y);
        active.remove(x);
        active.push((p + merges.len() - 1, slot_a, n_a + n_b, height));
    }
    ClusterTree::from_merges(p, &merges)
}

/// Drops internal nodes whose merge correlation `1 − height` is below
/// `threshold`. Leaves always survive; surviving nodes keep their relative
/// order and are renumbered densely.
///
/// Merge heights never decrease toward the root, so the survivors are
/// closed under taking children and form a forest.
pub fn cut_tree(tree: &ClusterTree, threshold: f64) -> Result<ClusterTree> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidThreshold(threshold));
    }
    let keep: Vec<bool> =
        tree.nodes().iter().map(|n| n.children.is_empty() || 1.0 - n.merge_height >= threshold).collect();
    let mut new_id = vec![usize::MAX; tree.len()];
    let mut next = 0;
    for (id, &k) in keep.iter().enumerate() {
        if k {
            new_id[id] = next;
            next += 1;
        }
    }
    let specs = tree
        .nodes()
        .iter()
        .filter(|n| keep[n.id])
        .map(|n| NodeSpec {
            id: new_id[n.id],
            members: n.members.clone(),
            children: n.children.iter().map(|&c| new_id[c]).collect(),
            merge_height: n.merge_height,
        })
        .collect();
    ClusterTree::new(tree.leaf_count(), specs)
}
