//! Bayesian model likelihood `log f(D|M)` by importance sampling.
//!
//! The proposal is a multivariate Student-t located at the posterior chain
//! mean with an inflated chain covariance.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::mcmc::McmcResult;
use super::problem::Target;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forcing::ForcingSeries;
use crate::model_space::PriorSpec;
use crate::spec::ModelSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BmlConfig {
    pub samples: usize,
    /// Degrees of freedom of the Student-t proposal.
    pub df: f64,
    /// Factor applied to the chain covariance.
    pub inflation: f64,
    /// Batches for the Monte Carlo standard error.
    pub batches: usize,
    /// Smallest acceptable effective sample size.
    pub min_ess: f64,
    pub seed: u64,
}

impl Default for BmlConfig {
    fn default() -> Self {
        BmlConfig {
            samples: 20000,
            df: 5.0,
            inflation: 2.0,
            batches: 25,
            min_ess: 100.0,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmlEstimate {
    pub log_bml: f64,
    pub mc_se: f64,
    /// Effective sample size of the importance weights.
    pub ess: f64,
    pub samples: usize,
}

/// `log Σ exp(x)`, with `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Multivariate Student-t with location `mean` and scale `L Lᵀ`.
#[derive(Clone, Debug)]
pub struct StudentT {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    df: f64,
    log_norm: f64,
}

impl StudentT {
    pub fn new(mean: DVector<f64>, scale: DMatrix<f64>, df: f64) -> Result<Self> {
        let d = mean.len() as f64;
        let chol = scale
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NonFiniteResult("proposal scale is not positive definite".into()))?
            .l();
        let log_det: f64 = chol.diagonal().iter().map(|x| x.ln()).sum();
        let log_norm = ln_gamma(0.5 * (df + d))
            - ln_gamma(0.5 * df)
            - 0.5 * d * (df * std::f64::consts::PI).ln()
            - log_det;
        Ok(StudentT {
            mean,
            chol,
            df,
            log_norm,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.mean.len();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u: f64 = ChiSquared::new(self.df).expect("positive df").sample(rng);
        &self.mean + (&self.chol * z) / (u / self.df).sqrt()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = self.mean.len() as f64;
        let r = self
            .chol
            .solve_lower_triangular(&(x - &self.mean))
            .expect("triangular solve");
        self.log_norm - 0.5 * (self.df + d) * (1.0 + r.norm_squared() / self.df).ln()
    }
}

/// Log-BML of one model from its posterior chains.
pub fn bml_estimate(
    spec: &ModelSpec,
    data: &Dataset,
    forcing: Option<&ForcingSeries>,
    prior: &PriorSpec,
    chains: &McmcResult,
    config: &BmlConfig,
) -> Result<BmlEstimate> {
    let target = Target::new(spec, data, forcing, prior)?;
    bml_estimate_target(&target, chains, config)
}

pub fn bml_estimate_target(target: &Target<'_>, chains: &McmcResult, config: &BmlConfig) -> Result<BmlEstimate> {
    if target.data().is_empty() {
        return Ok(BmlEstimate {
            log_bml: 0.0,
            mc_se: 0.0,
            ess: f64::INFINITY,
            samples: 0,
        });
    }
    let d = target.dim();
    if d == 0 {
        // nothing to integrate over
        return Ok(BmlEstimate {
            log_bml: target.log_likelihood(&[]),
            mc_se: 0.0,
            ess: f64::INFINITY,
            samples: 0,
        });
    }
    let pooled = chains.pooled();
    if pooled.len() < 2 || chains.dim() != d {
        return Err(Error::DimensionMismatch(
            "chain does not match the model's free coordinates".into(),
        ));
    }
    let n = pooled.len() as f64;
    let mean = DVector::from_fn(d, |j, _| pooled.iter().map(|x| x[j]).sum::<f64>() / n);
    let mut cov = DMatrix::zeros(d, d);
    for x in &pooled {
        let r = DVector::from_fn(d, |j, _| x[j] - mean[j]);
        cov += &r * r.transpose();
    }
    cov /= n - 1.0;
    // floor degenerate directions (a stuck coordinate) at a small variance
    for j in 0..d {
        cov[(j, j)] = cov[(j, j)].max(1e-8);
    }
    let proposal = StudentT::new(mean, cov * config.inflation, config.df)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let m = config.samples.max(config.batches.max(2));
    let log_w: Vec<f64> = (0..m)
        .map(|_| {
            let x = proposal.sample(&mut rng);
            let (lp, _) = target.evaluate(x.as_slice());
            if lp.is_finite() {
                lp - proposal.log_density(&x)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();

    let lse = log_sum_exp(&log_w);
    if !lse.is_finite() {
        return Err(Error::UnstableEstimate {
            ess: 0.0,
            min: config.min_ess,
        });
    }
    let log_bml = lse - (m as f64).ln();
    let w: Vec<f64> = log_w.iter().map(|x| (x - lse).exp()).collect();
    let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();

    // batch means of the normalised weights, then the delta method for the log
    let b = config.batches.max(2);
    let size = m / b;
    let batch: Vec<f64> = (0..b)
        .map(|k| w[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let bm = batch.iter().sum::<f64>() / b as f64;
    let var = batch.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (b - 1) as f64 / b as f64;
    let mc_se = var.sqrt() / bm;

    if ess < config.min_ess {
        return Err(Error::UnstableEstimate {
            ess,
            min: config.min_ess,
        });
    }
    Ok(BmlEstimate {
        log_bml,
        mc_se,
        ess,
        samples: m,
    })
}
