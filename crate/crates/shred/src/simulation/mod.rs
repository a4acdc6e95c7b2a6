//! Scenario simulation: covariance and data generation, every configured
//! method per replicate, and gFDR / gPower / prediction metrics.
//!
//! Replicate `r` draws everything from its own ChaCha8 stream (`seed`,
//! stream `r`) and replicates are reduced in index order, so results do not
//! depend on the number of worker threads.

pub mod config;
pub mod data;
pub mod metrics;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use config::{CovarianceSpec, ScenarioConfig};
pub use data::Dataset;
pub use metrics::{MetricsRecord, Score, Summary};

use crate::error::ShredError;
use crate::models;
use crate::pipeline::{self, Family};

/// Fraction of failed replicates above which a scenario aborts.
pub const MAX_FAILURE_RATE: f64 = 0.1;

/// The RNG for replicate `r` of a scenario seeded with `seed`.
pub fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub fdp: f64,
    pub power: f64,
    pub score: Score,
    pub selected_sets: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub truth: Vec<usize>,
    /// In config method order.
    pub methods: Vec<MethodOutcome>,
}

/// Runs one replicate end to end.
pub fn run_replicate(config: &ScenarioConfig, r: usize) -> Result<ReplicateOutcome, ShredError> {
    let mut rng = replicate_rng(config.seed, r);
    let sigma = data::gen_covariance(&config.cov, config.p, &mut rng)?;
    let l = data::cholesky_factor(&sigma)?;
    let train = data::gen_dataset(&l, config, &mut rng);
    let (x_test, y_test) = data::gen_test_set(&l, &train, config.family, config.test_size(), &mut rng);

    let tree = pipeline::build_tree(&train.x, config.tree_options())?;
    let tested = models::all_cluster_pvalues(&tree, &train.x, &train.y, config.family)?;
    if !tested.full.converged {
        return Err(ShredError::NotConverged { iterations: tested.full.iterations });
    }
    let family = Family::new(tree, tested.pvalues)?;
    let flat = family.flatten()?;

    let mut methods = Vec::with_capacity(config.methods.len());
    for method in &config.methods {
        let result = pipeline::run_method(method, &family, &flat, config.q)?;
        let fam = if method.is_flat() { &flat } else { &family };
        let (fdp, power) = metrics::gfdr_gpower(&result, &fam.tree, &fam.weights, &train.truth)?;
        let score = metrics::refit_and_score(
            &train.x,
            &train.y,
            &x_test,
            &y_test,
            &result.selected_sets,
            config.family,
            &mut rng,
        )?;
        methods.push(MethodOutcome { fdp, power, score, selected_sets: result.selected_sets });
    }
    Ok(ReplicateOutcome { truth: train.truth, methods })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub records: Vec<MetricsRecord>,
    pub replicates: usize,
    pub failures: usize,
    /// Messages of failed replicates, by replicate index.
    pub failure_messages: BTreeMap<usize, String>,
}

/// Runs every replicate on the current rayon pool and aggregates by method.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome, ShredError> {
    config.validate()?;
    let outcomes: Vec<Result<ReplicateOutcome, ShredError>> =
        (0..config.replicates).into_par_iter().map(|r| run_replicate(config, r)).collect();
    let mut ok = Vec::new();
    let mut failure_messages = BTreeMap::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => ok.push(o),
            Err(e) => {
                failure_messages.insert(r, e.to_string());
            }
        }
    }
    let failures = failure_messages.len();
    if failures as f64 > MAX_FAILURE_RATE * config.replicates as f64 || ok.is_empty() {
        return Err(ShredError::TooManyFailures { failed: failures, total: config.replicates });
    }
    let records = config
        .methods
        .iter()
        .enumerate()
        .map(|(k, method)| {
            let pick = |f: &dyn Fn(&MethodOutcome) -> f64| ok.iter().map(|o| f(&o.methods[k])).collect::<Vec<_>>();
            let mut histogram = BTreeMap::new();
            for o in &ok {
                for set in &o.methods[k].selected_sets {
                    *histogram.entry(set.len()).or_insert(0.0) += 1.0;
                }
            }
            for v in histogram.values_mut() {
                *v /= ok.len() as f64;
            }
            MetricsRecord {
                method: method.label(),
                rule: method.rule_label(),
                gpower: Summary::of(&pick(&|m| m.power)),
                gfdr: Summary::of(&pick(&|m| m.fdp)),
                score: Summary::of(&pick(&|m| m.score.value)),
                test_log_likelihood: Summary::of(&pick(&|m| m.score.log_likelihood)),
                set_size_histogram: histogram,
                replicates: ok.len(),
            }
        })
        .collect();
    Ok(ScenarioOutcome { records, replicates: config.replicates, failures, failure_messages })
}
