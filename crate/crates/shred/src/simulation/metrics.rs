use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;
use shred_core::lattice::{self, HypothesisSet};
use shred_core::{ClusterTree, SelectionResult, SizingWeights};

use crate::models::{self, ModelError, ModelFamily};

/// Generalized false discovery proportion and power of one selection.
///
/// A node is a true null when its members avoid `truth`. The proportion is
/// `σ(rejected ∩ nulls) / σ(rejected)`, or 0 with nothing rejected; power is
/// `σ(rejected ∩ non-nulls) / σ(non-nulls)`, or 0 with no true predictors.
pub fn gfdr_gpower(
    result: &SelectionResult,
    tree: &ClusterTree,
    weights: &SizingWeights,
    truth: &[usize],
) -> Result<(f64, f64), shred_core::Error> {
    let m = tree.len();
    let mut is_true = vec![false; tree.leaf_count()];
    for &t in truth {
        is_true[t] = true;
    }
    let non_null = HypothesisSet::from_ids(m, (0..m).filter(|&id| tree.node(id).members.iter().any(|&i| is_true[i])))?;
    let null = HypothesisSet::from_ids(m, (0..m).filter(|&id| !non_null.contains(id)))?;
    let rejected = &result.rejected;
    let total = lattice::sigma(rejected, tree, weights)?;
    let false_part = lattice::sigma(&rejected.intersection(&null), tree, weights)?;
    let true_part = lattice::sigma(&rejected.intersection(&non_null), tree, weights)?;
    let reachable = lattice::sigma(&lattice::closure(&non_null, tree)?, tree, weights)?;
    let fdp = if total > 0.0 { false_part / total } else { 0.0 };
    let power = if reachable > 0.0 { true_part / reachable } else { 0.0 };
    Ok((fdp.clamp(0.0, 1.0), power.clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    /// Test MSE (Gaussian, Poisson on the response scale) or classification
    /// accuracy at 0.5 (logistic).
    pub value: f64,
    pub log_likelihood: f64,
}

/// One representative per selected set, refit on the training data and
/// scored on the test data. An empty selection scores the intercept-only
/// model.
pub fn refit_and_score<R: Rng + ?Sized>(
    x_train: &DMatrix<f64>,
    y_train: &[f64],
    x_test: &DMatrix<f64>,
    y_test: &[f64],
    selected_sets: &[Vec<usize>],
    family: ModelFamily,
    rng: &mut R,
) -> Result<Score, ModelError> {
    let reps: Vec<usize> = selected_sets.iter().map(|set| set[rng.random_range(0..set.len())]).collect();
    let pick = |x: &DMatrix<f64>| DMatrix::from_fn(x.nrows(), reps.len(), |i, j| x[(i, reps[j])]);
    let fit = models::fit_glm(&pick(x_train), y_train, family)?;
    let eta = fit.linear_predictor(&pick(x_test));
    let n = y_test.len() as f64;
    let log_likelihood = match family {
        ModelFamily::Gaussian => {
            let var = fit.rss.unwrap_or(0.0) / y_train.len() as f64;
            y_test
                .iter()
                .zip(eta.iter())
                .map(|(y, e)| -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (y - e) * (y - e) / var))
                .sum()
        }
        _ => y_test
            .iter()
            .zip(eta.iter())
            .map(|(&y, &e)| match family {
                ModelFamily::Logistic => y * e - (e.max(0.0) + (-e.abs()).exp().ln_1p()),
                _ => y * e - e.exp() - statrs::function::gamma::ln_gamma(y + 1.0),
            })
            .sum(),
    };
    let value = match family {
        ModelFamily::Logistic => {
            y_test.iter().zip(eta.iter()).filter(|(&y, &e)| (family.mean(e) > 0.5) == (y == 1.0)).count() as f64 / n
        }
        _ => y_test.iter().zip(eta.iter()).map(|(&y, &e)| (y - family.mean(e)).powi(2)).sum::<f64>() / n,
    };
    Ok(Score { value, log_likelihood })
}

/// Mean and standard error (sample standard deviation over `√len`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let k = values.len();
        if k == 0 {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        if k == 1 {
            return Self { mean, se: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
        Self { mean, se: (var / k as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub method: String,
    pub rule: String,
    pub gpower: Summary,
    pub gfdr: Summary,
    /// MSE or accuracy, by family.
    pub score: Summary,
    pub test_log_likelihood: Summary,
    /// Mean number of selected sets of each size per replicate.
    pub set_size_histogram: BTreeMap<usize, f64>,
    pub replicates: usize,
}

pub fn score_name(family: ModelFamily) -> &'static str {
    match family {
        ModelFamily::Logistic => "accuracy",
        _ => "MSE",
    }
}

/// Tab-separated table, one row per method.
pub fn to_tsv(records: &[MetricsRecord], family: ModelFamily) -> String {
    let mut out = String::new();
    writeln!(out, "method\trule\tgPower\tSE\tgFDR\tSE\t{}\tSE", score_name(family)).unwrap();
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.method, r.rule, r.gpower.mean, r.gpower.se, r.gfdr.mean, r.gfdr.se, r.score.mean, r.score.se
        )
        .unwrap();
    }
    out
}
