use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::config::{CovarianceSpec, ScenarioConfig};
use crate::error::ShredError;
use crate::models::ModelFamily;

/// Added to the diagonal once when the first Cholesky attempt fails.
pub const JITTER: f64 = 1e-10;
/// Poisson linear predictors are clipped to `±ETA_CLIP`.
pub const ETA_CLIP: f64 = 30.0;
/// Target accuracy of the calibrated logistic event rate.
const RATE_TOLERANCE: f64 = 1e-4;

/// Block sizes 5, 10, 15, ... with the leftover predictors as a final block.
pub fn block_sizes(p: usize) -> Result<Vec<usize>, ShredError> {
    if p < 5 {
        return Err(ShredError::config("p", "clustered covariance needs at least 5 predictors"));
    }
    let mut sizes = Vec::new();
    let mut used = 0;
    while used + 5 * (sizes.len() + 1) <= p {
        sizes.push(5 * (sizes.len() + 1));
        used += sizes.last().unwrap();
    }
    if used < p {
        sizes.push(p - used);
    }
    Ok(sizes)
}

/// Covariance matrix for `spec`. The clustered layout draws a random
/// partition and block correlations from `rng`; the others use no
/// randomness.
pub fn gen_covariance<R: Rng + ?Sized>(spec: &CovarianceSpec, p: usize, rng: &mut R) -> Result<DMatrix<f64>, ShredError> {
    let mut sigma = DMatrix::identity(p, p);
    match *spec {
        CovarianceSpec::Identity => {}
        CovarianceSpec::CommonComponent { rho } => {
            sigma.fill(rho);
            sigma.fill_diagonal(1.0);
        }
        CovarianceSpec::Ar1 { rho } => {
            for i in 0..p {
                for j in 0..p {
                    sigma[(i, j)] = rho.powi(i.abs_diff(j) as i32);
                }
            }
        }
        CovarianceSpec::Clustered { rho_low, rho_high } => {
            let mut order: Vec<usize> = (0..p).collect();
            order.shuffle(rng);
            let mut start = 0;
            for size in block_sizes(p)? {
                let rho = rng.random_range(rho_low..=rho_high);
                let block = &order[start..start + size];
                for &i in block {
                    for &j in block {
                        if i != j {
                            sigma[(i, j)] = rho;
                        }
                    }
                }
                start += size;
            }
        }
        CovarianceSpec::CorrelatedPair { first, second, rho } => {
            sigma[(first, second)] = rho;
            sigma[(second, first)] = rho;
        }
    }
    Ok(sigma)
}

/// Lower Cholesky factor, retrying once with [`JITTER`] on the diagonal.
pub fn cholesky_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>, ShredError> {
    if let Some(c) = Cholesky::<f64, Dyn>::new(sigma.clone()) {
        return Ok(c.l());
    }
    let mut jittered = sigma.clone();
    for i in 0..sigma.nrows() {
        jittered[(i, i)] += JITTER;
    }
    Cholesky::new(jittered).map(|c| c.l()).ok_or(ShredError::NotPositiveDefinite)
}

/// `n` rows of `N(0, L Lᵀ)`. Normals are drawn row by row.
pub fn draw_design<R: Rng + ?Sized>(l: &DMatrix<f64>, n: usize, rng: &mut R) -> DMatrix<f64> {
    let p = l.nrows();
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    z * l.transpose()
}

/// Intercept putting the mean event probability of `η + b` at one half.
pub fn calibrate_logistic_intercept(eta: &[f64]) -> f64 {
    let rate = |b: f64| eta.iter().map(|&e| ModelFamily::Logistic.mean(e + b)).sum::<f64>() / eta.len() as f64;
    let span = eta.iter().fold(0.0f64, |m, e| m.max(e.abs())) + 10.0;
    let (mut lo, mut hi) = (-span, span);
    let mut mid = 0.0;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let r = rate(mid);
        if (r - 0.5).abs() <= RATE_TOLERANCE {
            break;
        }
        if r < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}

/// Responses for design `x` under coefficients `beta` and `intercept`.
pub fn draw_response<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    beta: &[f64],
    intercept: f64,
    family: ModelFamily,
    rng: &mut R,
) -> Vec<f64> {
    let eta = x * nalgebra::DVector::from_column_slice(beta);
    eta.iter()
        .map(|&e| {
            let e = e + intercept;
            match family {
                ModelFamily::Gaussian => e + rng.sample::<f64, _>(StandardNormal),
                ModelFamily::Logistic => f64::from(u8::from(rng.random::<f64>() < ModelFamily::Logistic.mean(e))),
                ModelFamily::PoissonLog => {
                    let rate = e.clamp(-ETA_CLIP, ETA_CLIP).exp();
                    Poisson::new(rate).expect("finite positive rate").sample(rng)
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    /// Sorted true predictors.
    pub truth: Vec<usize>,
    /// One coefficient per predictor, zero off the truth.
    pub beta: Vec<f64>,
    pub intercept: f64,
}

/// Draws the truth, coefficients, design and response. `l` is the lower
/// Cholesky factor of the predictor covariance.
pub fn gen_dataset<R: Rng + ?Sized>(l: &DMatrix<f64>, config: &ScenarioConfig, rng: &mut R) -> Dataset {
    let p = config.p;
    let mut truth = match &config.truth {
        Some(t) => t.clone(),
        None => rand::seq::index::sample(rng, p, config.t).into_vec(),
    };
    truth.sort_unstable();
    let mut beta = vec![0.0; p];
    for &i in &truth {
        beta[i] = rng.sample::<f64, _>(StandardNormal);
    }
    let x = draw_design(l, config.n, rng);
    let intercept = match config.family {
        ModelFamily::Gaussian => 0.0,
        ModelFamily::Logistic => {
            let eta = &x * nalgebra::DVector::from_column_slice(&beta);
            calibrate_logistic_intercept(eta.as_slice())
        }
        ModelFamily::PoissonLog => -1.0,
    };
    let y = draw_response(&x, &beta, intercept, config.family, rng);
    Dataset { x, y, truth, beta, intercept }
}

/// An independent draw of `n` rows under the same coefficients.
pub fn gen_test_set<R: Rng + ?Sized>(
    l: &DMatrix<f64>,
    train: &Dataset,
    family: ModelFamily,
    n: usize,
    rng: &mut R,
) -> (DMatrix<f64>, Vec<f64>) {
    let x = draw_design(l, n, rng);
    let y = draw_response(&x, &train.beta, train.intercept, family, rng);
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::MethodSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use shred_core::SlopeRule;

    fn config(n: usize, p: usize, t: usize, family: ModelFamily, cov: CovarianceSpec) -> ScenarioConfig {
        ScenarioConfig {
            n,
            p,
            t,
            family,
            cov,
            replicates: 1,
            q: 0.05,
            seed: 0,
            methods: vec![MethodSpec::new(SlopeRule::Bh)],
            test_n: None,
            test_fraction: None,
            linkage: Default::default(),
            corr_cut: None,
            truth: None,
        }
    }

    #[test]
    fn covariance_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ar = gen_covariance(&CovarianceSpec::Ar1 { rho: 0.5 }, 5, &mut rng).unwrap();
        assert_eq!(ar[(0, 2)], 0.25);
        let cc = gen_covariance(&CovarianceSpec::CommonComponent { rho: 0.5 }, 4, &mut rng).unwrap();
        assert_eq!(cc[(3, 1)], 0.5);
        assert_eq!(cc[(2, 2)], 1.0);
        assert_eq!(block_sizes(200).unwrap().len(), 9);
        assert_eq!(*block_sizes(200).unwrap().last().unwrap(), 20);
        assert_eq!(block_sizes(300).unwrap().len(), 11);
        assert_eq!(*block_sizes(300).unwrap().last().unwrap(), 25);
        assert_eq!(block_sizes(15).unwrap(), vec![5, 10]);
        assert!(block_sizes(4).is_err());
    }

    #[test]
    fn clustered_blocks_follow_the_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sigma = gen_covariance(&CovarianceSpec::Clustered { rho_low: 0.6, rho_high: 0.9 }, 50, &mut rng).unwrap();
        assert_eq!(sigma, sigma.transpose());
        // Each predictor's block size is one plus its count of correlated partners.
        let mut sizes: Vec<usize> = (0..50).map(|i| 1 + (0..50).filter(|&j| j != i && sigma[(i, j)] != 0.0).count()).collect();
        sizes.sort_unstable();
        sizes.dedup();
        assert_eq!(sizes, vec![5, 10, 15, 20]);
        assert!(sigma.iter().all(|&v| v == 0.0 || (0.6..=1.0).contains(&v)));
        assert!(cholesky_factor(&sigma).is_ok());
    }

    #[test]
    fn jitter_rescues_singular_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sigma = gen_covariance(&CovarianceSpec::CommonComponent { rho: 1.0 }, 2, &mut rng).unwrap();
        assert!(cholesky_factor(&sigma).is_ok());
        let bad = gen_covariance(&CovarianceSpec::CommonComponent { rho: -1.0 }, 3, &mut rng).unwrap();
        assert!(matches!(cholesky_factor(&bad), Err(ShredError::NotPositiveDefinite)));
    }

    #[test]
    fn sample_covariance_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 100_000;
        let sigma = gen_covariance(&CovarianceSpec::Ar1 { rho: 0.7 }, 5, &mut rng).unwrap();
        let x = draw_design(&cholesky_factor(&sigma).unwrap(), n, &mut rng);
        let s = x.transpose() * &x / n as f64;
        let tol = 3.0 / (n as f64).sqrt();
        for i in 0..5 {
            for j in 0..5 {
                assert!((s[(i, j)] - sigma[(i, j)]).abs() < tol, "({i},{j}) {} vs {}", s[(i, j)], sigma[(i, j)]);
            }
        }
    }

    #[test]
    fn poisson_null_mean_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = config(50_000, 3, 0, ModelFamily::PoissonLog, CovarianceSpec::Identity);
        let d = gen_dataset(&DMatrix::identity(3, 3), &c, &mut rng);
        let mean = d.y.iter().sum::<f64>() / d.y.len() as f64;
        // e^{-1}, within four standard errors.
        assert!((mean - (-1.0f64).exp()).abs() < 4.0 * ((-1.0f64).exp() / 50_000.0).sqrt());
        assert!(d.truth.is_empty() && d.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn logistic_rate_is_calibrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = config(4000, 10, 5, ModelFamily::Logistic, CovarianceSpec::Identity);
        let d = gen_dataset(&DMatrix::identity(10, 10), &c, &mut rng);
        let eta = &d.x * nalgebra::DVector::from_column_slice(&d.beta);
        let rate = eta.iter().map(|&e| ModelFamily::Logistic.mean(e + d.intercept)).sum::<f64>() / 4000.0;
        assert!((rate - 0.5).abs() <= 1e-4);
        assert_eq!(d.truth.len(), 5);
        assert!(d.y.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn fixed_truth_is_used() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut c = config(20, 6, 2, ModelFamily::Gaussian, CovarianceSpec::Identity);
        c.truth = Some(vec![4, 1]);
        let d = gen_dataset(&DMatrix::identity(6, 6), &c, &mut rng);
        assert_eq!(d.truth, vec![1, 4]);
        assert!(d.beta.iter().enumerate().all(|(i, &b)| (b != 0.0) == (i == 1 || i == 4)));
    }
}
