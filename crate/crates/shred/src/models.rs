//! Gaussian, logistic and Poisson regression fits and the cluster tests
//! built on them.
//!
//! Every design gets an intercept column in front of the predictors. A
//! cluster hypothesis `H_C` is tested by refitting without the columns of
//! `C`: a partial F-test for the Gaussian family, a likelihood-ratio test
//! against `χ²(|C|)` otherwise.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shred_core::{ClusterTree, NodeId};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

pub const MAX_ITERATIONS: usize = 100;
/// Relative log-likelihood change at which IRLS stops.
pub const TOLERANCE: f64 = 1e-8;
const MAX_HALVINGS: usize = 30;
/// Residual norm, relative to the column norm, below which a column counts
/// as a combination of earlier ones.
const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Gaussian,
    Logistic,
    #[serde(alias = "poisson")]
    #[value(alias = "poisson")]
    PoissonLog,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Gaussian => "gaussian",
            ModelFamily::Logistic => "logistic",
            ModelFamily::PoissonLog => "poisson_log",
        }
    }

    /// Mean response for linear predictor `eta`.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            ModelFamily::Gaussian => eta,
            ModelFamily::Logistic => 1.0 / (1.0 + (-eta).exp()),
            ModelFamily::PoissonLog => eta.min(MAX_ETA).exp(),
        }
    }

    /// Log-likelihood contribution of one observation; the Gaussian case
    /// omits the variance, which is profiled out in [`fit_glm`].
    fn log_density(self, y: f64, eta: f64) -> f64 {
        match self {
            ModelFamily::Gaussian => -0.5 * (y - eta) * (y - eta),
            ModelFamily::Logistic => y * eta - softplus(eta),
            ModelFamily::PoissonLog => y * eta - eta.min(MAX_ETA).exp() - ln_gamma(y + 1.0),
        }
    }
}

/// Keeps `exp` finite during IRLS.
const MAX_ETA: f64 = 700.0;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("design is rank deficient: predictor columns {columns:?} are linear combinations of earlier columns")]
    RankDeficient { columns: Vec<usize> },
    #[error("{n} observations cannot support {columns} fitted columns")]
    TooFewObservations { n: usize, columns: usize },
    #[error("response has {got} entries, design has {expected} rows")]
    ResponseLength { expected: usize, got: usize },
    #[error("response value {value} at row {row} is invalid for the {family} family")]
    InvalidResponse { family: &'static str, row: usize, value: f64 },
    #[error("tree has {tree} leaves, design has {design} predictor columns")]
    LeafMismatch { tree: usize, design: usize },
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("cluster predictor {0} is outside the design")]
    PredictorOutOfRange(usize),
    #[error("least-squares system is singular")]
    Singular,
    #[error("cluster node {node}: {source}")]
    Cluster {
        node: NodeId,
        #[source]
        source: Box<ModelError>,
    },
}

impl ModelError {
    /// The error inside any [`ModelError::Cluster`] wrappers.
    pub fn root_cause(&self) -> &ModelError {
        match self {
            ModelError::Cluster { source, .. } => source.root_cause(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    /// Intercept first, then one coefficient per design column.
    pub coefficients: Vec<f64>,
    pub log_likelihood: f64,
    /// `n` minus the number of fitted columns, intercept included.
    pub residual_df: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Residual sum of squares; only for the Gaussian family.
    pub rss: Option<f64>,
}

impl FitResult {
    /// Linear predictor for the rows of `x` (intercept column implied).
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let beta = DVector::from_row_slice(&self.coefficients[1..]);
        let mut eta = x * beta;
        eta.add_scalar_mut(self.coefficients[0]);
        eta
    }
}

fn with_intercept(x: &DMatrix<f64>, keep: &[usize]) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, keep.len() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, keep[j - 1])] })
}

/// Columns (as predictor indices) that are linear combinations of the
/// intercept and earlier columns, found by modified Gram-Schmidt.
pub fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let a = with_intercept(x, &(0..x.ncols()).collect::<Vec<_>>());
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..a.ncols() {
        let mut v = a.column(j).into_owned();
        let norm = v.norm();
        for b in &basis {
            let proj = b.dot(&v);
            v.axpy(-proj, b, 1.0);
        }
        let rest = v.norm();
        if norm == 0.0 || rest <= RANK_TOLERANCE * norm {
            if j > 0 {
                dependent.push(j - 1);
            }
        } else {
            basis.push(v / rest);
        }
    }
    dependent
}

fn check_response(y: &[f64], family: ModelFamily) -> Result<(), ModelError> {
    for (row, &value) in y.iter().enumerate() {
        let ok = match family {
            ModelFamily::Gaussian => value.is_finite(),
            ModelFamily::Logistic => value == 0.0 || value == 1.0,
            ModelFamily::PoissonLog => value >= 0.0 && value.is_finite() && value.fract() == 0.0,
        };
        if !ok {
            return Err(ModelError::InvalidResponse { family: family.name(), row, value });
        }
    }
    Ok(())
}

/// Fits `family` on `x` (`n × k`, no intercept column) and `y`.
///
/// Requires `n > k + 1` and a full-rank design. Logistic and Poisson fits
/// that reach the iteration cap come back with `converged = false`.
pub fn fit_glm(x: &DMatrix<f64>, y: &[f64], family: ModelFamily) -> Result<FitResult, ModelError> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(ModelError::ResponseLength { expected: n, got: y.len() });
    }
    if n <= k + 1 {
        return Err(ModelError::TooFewObservations { n, columns: k + 1 });
    }
    check_response(y, family)?;
    let dependent = dependent_columns(x);
    if !dependent.is_empty() {
        return Err(ModelError::RankDeficient { columns: dependent });
    }
    fit_columns(x, y, family, &(0..k).collect::<Vec<_>>())
}

/// Fit on a subset of the columns of `x`; the caller has validated the design.
fn fit_columns(x: &DMatrix<f64>, y: &[f64], family: ModelFamily, keep: &[usize]) -> Result<FitResult, ModelError> {
    let a = with_intercept(x, keep);
    let y = DVector::from_column_slice(y);
    match family {
        ModelFamily::Gaussian => least_squares(&a, &y),
        _ => irls(&a, &y, family),
    }
}

fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<FitResult, ModelError> {
    let n = a.nrows();
    let (q, r) = a.clone().qr().unpack();
    let beta = r.solve_upper_triangular(&(q.transpose() * y)).ok_or(ModelError::Singular)?;
    let rss = (y - a * &beta).norm_squared();
    let log_likelihood = -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * rss / n as f64).ln() + 1.0);
    Ok(FitResult {
        coefficients: beta.iter().copied().collect(),
        log_likelihood,
        residual_df: n - a.ncols(),
        converged: true,
        iterations: 1,
        rss: Some(rss),
    })
}

fn log_likelihood(y: &DVector<f64>, eta: &DVector<f64>, family: ModelFamily) -> f64 {
    y.iter().zip(eta.iter()).map(|(&y, &e)| family.log_density(y, e)).sum()
}

fn irls(a: &DMatrix<f64>, y: &DVector<f64>, family: ModelFamily) -> Result<FitResult, ModelError> {
    let (n, k) = a.shape();
    let mut eta = y.map(|v| match family {
        ModelFamily::Logistic => {
            let mu = (v + 0.5) / 2.0;
            (mu / (1.0 - mu)).ln()
        }
        _ => (v + 0.1).ln(),
    });
    let mut beta: Option<DVector<f64>> = None;
    let mut ll_old = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // Weighted normal equations A'WA b = A'W z, with W z = W η + (y − μ).
        let mut w = DVector::zeros(n);
        let mut wz = DVector::zeros(n);
        for i in 0..n {
            let mu = family.mean(eta[i]);
            let wi = match family {
                ModelFamily::Logistic => mu * (1.0 - mu),
                _ => mu,
            };
            w[i] = wi;
            wz[i] = wi * eta[i] + (y[i] - mu);
        }
        let mut xtwx = DMatrix::zeros(k, k);
        let mut xtwz = DVector::zeros(k);
        for i in 0..n {
            let row = a.row(i);
            for p in 0..k {
                let s = w[i] * row[p];
                xtwz[p] += row[p] * wz[i];
                for q in 0..=p {
                    xtwx[(p, q)] += s * row[q];
                }
            }
        }
        for p in 0..k {
            for q in 0..p {
                xtwx[(q, p)] = xtwx[(p, q)];
            }
        }
        let Some(chol) = xtwx.cholesky() else {
            break;
        };
        let mut candidate = chol.solve(&xtwz);
        let mut cand_eta = a * &candidate;
        let mut ll = log_likelihood(y, &cand_eta, family);
        if let Some(prev) = &beta {
            let mut halvings = 0;
            while !(ll >= ll_old - TOLERANCE * ll_old.abs()) && halvings < MAX_HALVINGS {
                candidate = (&candidate + prev) * 0.5;
                cand_eta = a * &candidate;
                ll = log_likelihood(y, &cand_eta, family);
                halvings += 1;
            }
        }
        let change = (ll - ll_old).abs();
        beta = Some(candidate);
        eta = cand_eta;
        if change <= TOLERANCE * ll.abs() {
            ll_old = ll;
            converged = true;
            break;
        }
        ll_old = ll;
    }

    let beta = beta.ok_or(ModelError::Singular)?;
    Ok(FitResult {
        coefficients: beta.iter().copied().collect(),
        log_likelihood: ll_old,
        residual_df: n - k,
        converged,
        iterations,
        rss: None,
    })
}

/// Upper-tail p-value of `H_C` given the full fit; `members` are predictor
/// indices. Returns the p-value and whether the reduced fit converged.
pub fn cluster_pvalue(
    x: &DMatrix<f64>,
    y: &[f64],
    family: ModelFamily,
    full: &FitResult,
    members: &[usize],
) -> Result<(f64, bool), ModelError> {
    let k = x.ncols();
    if members.is_empty() {
        return Err(ModelError::EmptyCluster);
    }
    if let Some(&bad) = members.iter().find(|&&m| m >= k) {
        return Err(ModelError::PredictorOutOfRange(bad));
    }
    let mut removed = vec![false; k];
    for &m in members {
        removed[m] = true;
    }
    let keep: Vec<usize> = (0..k).filter(|&j| !removed[j]).collect();
    let dropped = (k - keep.len()) as f64;
    let reduced = fit_columns(x, y, family, &keep)?;
    let p = match family {
        ModelFamily::Gaussian => {
            let rss_full = full.rss.expect("gaussian fit records its rss");
            let rss_reduced = reduced.rss.expect("gaussian fit records its rss");
            let df = full.residual_df as f64;
            let extra = (rss_reduced - rss_full).max(0.0);
            if extra == 0.0 {
                1.0
            } else if rss_full == 0.0 {
                0.0
            } else {
                let f = (extra / dropped) / (rss_full / df);
                FisherSnedecor::new(dropped, df).expect("positive degrees of freedom").sf(f)
            }
        }
        _ => {
            let stat = (2.0 * (full.log_likelihood - reduced.log_likelihood)).max(0.0);
            ChiSquared::new(dropped).expect("positive degrees of freedom").sf(stat)
        }
    };
    Ok((p.clamp(0.0, 1.0), reduced.converged))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterPValues {
    pub full: FitResult,
    /// One p-value per tree node.
    pub pvalues: Vec<f64>,
    /// Per node, whether its reduced fit converged.
    pub reduced_converged: Vec<bool>,
}

/// Fits the full model once, then tests every node of `tree`. Reduced fits
/// run in parallel on the current rayon pool; results are in node order.
pub fn all_cluster_pvalues(
    tree: &ClusterTree,
    x: &DMatrix<f64>,
    y: &[f64],
    family: ModelFamily,
) -> Result<ClusterPValues, ModelError> {
    if tree.leaf_count() != x.ncols() {
        return Err(ModelError::LeafMismatch { tree: tree.leaf_count(), design: x.ncols() });
    }
    let full = fit_glm(x, y, family)?;
    let results: Vec<(f64, bool)> = tree
        .nodes()
        .par_iter()
        .map(|node| {
            cluster_pvalue(x, y, family, &full, &node.members)
                .map_err(|e| ModelError::Cluster { node: node.id, source: Box::new(e) })
        })
        .collect::<Result<_, _>>()?;
    let (pvalues, reduced_converged) = results.into_iter().unzip();
    Ok(ClusterPValues { full, pvalues, reduced_converged })
}
