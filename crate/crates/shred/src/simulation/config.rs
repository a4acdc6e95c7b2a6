use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use shred_core::clustering::Linkage;

use crate::error::ShredError;
use crate::models::ModelFamily;
use crate::pipeline::{MethodSpec, TreeOptions};

/// Predictor covariance with unit diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    /// `ρ` between every pair of predictors.
    CommonComponent { rho: f64 },
    /// Random blocks of sizes 5, 10, 15, ... with the leftover predictors in
    /// the last block; block `k` has within-block correlation
    /// `ρ_k ~ U[rho_low, rho_high]` and blocks are uncorrelated.
    Clustered { rho_low: f64, rho_high: f64 },
    /// `ρ^{|i−j|}`.
    #[serde(rename = "ar1")]
    Ar1 { rho: f64 },
    Identity,
    /// Identity except for one correlated pair of predictors.
    CorrelatedPair { first: usize, second: usize, rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub p: usize,
    /// Number of true predictors.
    #[serde(rename = "T", alias = "t")]
    pub t: usize,
    pub family: ModelFamily,
    pub cov: CovarianceSpec,
    pub replicates: usize,
    pub q: f64,
    pub seed: u64,
    pub methods: Vec<MethodSpec>,
    /// Size of the independent test draw; defaults to `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_n: Option<usize>,
    /// Test draw size as a fraction of `n`; exclusive with `test_n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    #[serde(default)]
    pub linkage: Linkage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr_cut: Option<f64>,
    /// Fixed true predictors instead of a random draw per replicate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<usize>>,
}

impl ScenarioConfig {
    /// Parses JSON, reporting the path of the first offending field.
    pub fn from_json(text: &str) -> Result<Self, ShredError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            ShredError::config(field, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ShredError> {
        if self.p == 0 {
            return Err(ShredError::config("p", "must be at least 1"));
        }
        if self.n <= self.p + 1 {
            return Err(ShredError::config("n", format!("must exceed p + 1 = {}", self.p + 1)));
        }
        if self.t > self.p {
            return Err(ShredError::config("T", format!("{} true predictors exceed p = {}", self.t, self.p)));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(ShredError::config("q", format!("{} is outside (0, 1)", self.q)));
        }
        if self.replicates == 0 {
            return Err(ShredError::config("replicates", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(ShredError::config("methods", "at least one method is required"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if let shred_core::SlopeRule::Explicit(a) = m.rule {
                if !(a.is_finite() && a > 0.0) {
                    return Err(ShredError::config(format!("methods[{i}].rule"), format!("slope {a} must be positive")));
                }
            }
        }
        let rho_ok = |r: f64| (-1.0..=1.0).contains(&r);
        match self.cov {
            CovarianceSpec::CommonComponent { rho } | CovarianceSpec::Ar1 { rho } if !rho_ok(rho) => {
                return Err(ShredError::config("cov.rho", format!("{rho} is outside [-1, 1]")));
            }
            CovarianceSpec::Clustered { rho_low, rho_high } => {
                if !(rho_ok(rho_low) && rho_ok(rho_high) && rho_low <= rho_high) {
                    return Err(ShredError::config("cov", "need -1 <= rho_low <= rho_high <= 1"));
                }
                if self.p < 5 {
                    return Err(ShredError::config("p", "clustered covariance needs at least 5 predictors"));
                }
            }
            CovarianceSpec::CorrelatedPair { first, second, rho } => {
                if first >= self.p || second >= self.p || first == second {
                    return Err(ShredError::config("cov", "pair must be two distinct predictors below p"));
                }
                if !(rho > -1.0 && rho < 1.0) {
                    return Err(ShredError::config("cov.rho", format!("{rho} is outside (-1, 1)")));
                }
            }
            _ => {}
        }
        match (self.test_n, self.test_fraction) {
            (Some(_), Some(_)) => return Err(ShredError::config("test_n", "give test_n or test_fraction, not both")),
            (Some(0), _) => return Err(ShredError::config("test_n", "must be at least 1")),
            (_, Some(f)) if !(f > 0.0 && f.is_finite()) => {
                return Err(ShredError::config("test_fraction", format!("{f} must be positive")));
            }
            _ => {}
        }
        if let Some(c) = self.corr_cut {
            if !(0.0..=1.0).contains(&c) {
                return Err(ShredError::config("corr_cut", format!("{c} is outside [0, 1]")));
            }
        }
        if let Some(truth) = &self.truth {
            let distinct: BTreeSet<_> = truth.iter().collect();
            if truth.len() != self.t || distinct.len() != truth.len() || truth.iter().any(|&i| i >= self.p) {
                return Err(ShredError::config("truth", format!("must list {} distinct predictors below p", self.t)));
            }
        }
        Ok(())
    }

    pub fn test_size(&self) -> usize {
        match (self.test_n, self.test_fraction) {
            (Some(t), _) => t,
            (None, Some(f)) => ((f * self.n as f64).round() as usize).max(1),
            (None, None) => self.n,
        }
    }

    pub fn tree_options(&self) -> TreeOptions {
        TreeOptions { linkage: self.linkage, corr_cut: self.corr_cut }
    }
}
