//! Component-wise random-walk Metropolis on the unconstrained scale.
//!
//! Proposal scales adapt by Robbins–Monro steps towards the target
//! acceptance rate during burn-in only and are frozen afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::problem::Target;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forcing::ForcingSeries;
use crate::model_space::PriorSpec;
use crate::params::ParamVector;
use crate::spec::ModelSpec;

/// Potential scale reduction below which chains count as converged.
pub const RHAT_LIMIT: f64 = 1.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    /// Iterations kept after burn-in (before thinning).
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    pub initial_scale: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 4000,
            burn_in: 2000,
            thin: 2,
            chains: 2,
            seed: 1,
            target_acceptance: 0.3,
            initial_scale: 0.5,
        }
    }
}

/// Proposal scales at one point of the burn-in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningStep {
    pub iteration: usize,
    pub scales: Vec<f64>,
}

/// One chain of free unconstrained coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub seed: u64,
    pub draws: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    pub log_likelihood: Vec<f64>,
    /// Post-burn-in acceptance rate per coordinate.
    pub acceptance: Vec<f64>,
    pub scales: Vec<f64>,
    pub tuning: Vec<TuningStep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcResult {
    pub labels: Vec<String>,
    pub chains: Vec<Chain>,
    /// Split-chain potential scale reduction per coordinate.
    pub rhat: Vec<f64>,
    pub converged: bool,
}

impl McmcResult {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// All draws of all chains, chain by chain.
    pub fn pooled(&self) -> Vec<&[f64]> {
        self.chains
            .iter()
            .flat_map(|c| c.draws.iter().map(|d| d.as_slice()))
            .collect()
    }

    /// Empirical quantile of one free coordinate over the pooled draws.
    pub fn quantile(&self, coord: usize, prob: f64) -> f64 {
        let mut xs: Vec<f64> = self.pooled().iter().map(|d| d[coord]).collect();
        xs.sort_by(f64::total_cmp);
        quantile_sorted(&xs, prob)
    }

    pub fn mean(&self) -> Vec<f64> {
        let pooled = self.pooled();
        let n = pooled.len() as f64;
        (0..self.dim())
            .map(|j| pooled.iter().map(|d| d[j]).sum::<f64>() / n)
            .collect()
    }
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile_sorted(xs: &[f64], prob: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let h = prob.clamp(0.0, 1.0) * (xs.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

/// Split-chain potential scale reduction of one coordinate.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .filter(|h| h.len() > 1)
        .collect();
    if halves.len() < 2 {
        return f64::NAN;
    }
    let n = halves.iter().map(|h| h.len()).min().unwrap_or(0) as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / h.len() as f64).collect();
    let vars: Vec<f64> = halves
        .iter()
        .zip(&means)
        .map(|(h, m)| h.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (h.len() - 1) as f64)
        .collect();
    let m = halves.len() as f64;
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = vars.iter().sum::<f64>() / m;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

fn run_chain(target: &Target<'_>, config: &McmcConfig, seed: u64, init: Option<&[f64]>) -> Result<Chain> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = target.dim();
    let mut x = match init {
        Some(v) => v.to_vec(),
        None => target.sample_prior(&mut rng),
    };
    let (mut lp, mut ll) = target.evaluate(&x);
    let mut tries = 0;
    while !lp.is_finite() {
        tries += 1;
        if tries > 200 {
            return Err(Error::AllStartsFailed);
        }
        x = target.sample_prior(&mut rng);
        (lp, ll) = target.evaluate(&x);
    }

    let mut log_scale = vec![config.initial_scale.ln(); d];
    let mut accepted = vec![0usize; d];
    let thin = config.thin.max(1);
    let mut chain = Chain {
        seed,
        draws: Vec::with_capacity(config.iterations / thin),
        log_posterior: Vec::new(),
        log_likelihood: Vec::new(),
        acceptance: vec![0.0; d],
        scales: Vec::new(),
        tuning: Vec::new(),
    };
    let total = config.burn_in + config.iterations;
    for it in 0..total {
        let burning = it < config.burn_in;
        for j in 0..d {
            let old = x[j];
            let z: f64 = rng.sample(StandardNormal);
            x[j] = old + log_scale[j].exp() * z;
            let (lp_new, ll_new) = target.evaluate(&x);
            let u: f64 = rng.random();
            let accept = lp_new.is_finite() && u.ln() < lp_new - lp;
            if accept {
                lp = lp_new;
                ll = ll_new;
            } else {
                x[j] = old;
            }
            if burning {
                let gain = 1.0 / ((it + 1) as f64).powf(0.6);
                let hit = if accept { 1.0 } else { 0.0 };
                log_scale[j] += gain * (hit - config.target_acceptance);
            } else if accept {
                accepted[j] += 1;
            }
        }
        if burning && (it + 1) % 100 == 0 {
            chain.tuning.push(TuningStep {
                iteration: it + 1,
                scales: log_scale.iter().map(|s| s.exp()).collect(),
            });
        }
        if !burning && (it - config.burn_in).is_multiple_of(thin) {
            chain.draws.push(x.clone());
            chain.log_posterior.push(lp);
            chain.log_likelihood.push(ll);
        }
    }
    chain.acceptance = accepted
        .iter()
        .map(|&a| a as f64 / config.iterations.max(1) as f64)
        .collect();
    chain.scales = log_scale.iter().map(|s| s.exp()).collect();
    Ok(chain)
}

/// Posterior sample of one model; chain `c` uses seed `config.seed + c`.
pub fn mcmc_sample(
    spec: &ModelSpec,
    data: &Dataset,
    forcing: Option<&ForcingSeries>,
    prior: &PriorSpec,
    config: &McmcConfig,
) -> Result<McmcResult> {
    let target = Target::new(spec, data, forcing, prior)?;
    mcmc_sample_target(&target, config, &[])
}

/// Posterior sample with optional per-chain initial points (free coordinates).
pub fn mcmc_sample_target(target: &Target<'_>, config: &McmcConfig, inits: &[Vec<f64>]) -> Result<McmcResult> {
    let n_chains = config.chains.max(1);
    let chains = (0..n_chains)
        .map(|c| {
            let init = inits.get(c).map(|v| v.as_slice());
            run_chain(target, config, config.seed.wrapping_add(c as u64), init)
        })
        .collect::<Result<Vec<_>>>()?;
    let d = target.dim();
    let rhat: Vec<f64> = (0..d)
        .map(|j| {
            let series: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| c.draws.iter().map(|x| x[j]).collect())
                .collect();
            split_rhat(&series)
        })
        .collect();
    let converged = n_chains >= 2 && rhat.iter().all(|r| *r < RHAT_LIMIT);
    if !converged {
        log::warn!(
            "{}: chains not converged (max split R-hat {:.3})",
            target.spec(),
            rhat.iter().cloned().fold(f64::NAN, f64::max)
        );
    }
    Ok(McmcResult {
        labels: target.labels(),
        chains,
        rhat,
        converged,
    })
}

/// Natural-scale parameters of every pooled draw.
pub fn draws_as_params(target: &Target<'_>, result: &McmcResult) -> Result<Vec<ParamVector>> {
    result.pooled().iter().map(|d| target.params(d)).collect()
}
