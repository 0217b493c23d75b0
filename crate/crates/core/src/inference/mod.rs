//! Fitting and comparing models: multi-start ML, adaptive MCMC, importance
//! sampled model likelihoods, information criteria and property weights.

mod bml;
mod compare;
mod mcmc;
mod ml;
mod problem;

pub use bml::{bml_estimate, bml_estimate_target, log_sum_exp, BmlConfig, BmlEstimate, StudentT};
pub use compare::{
    bayes_factor, format_property_tables, posterior_model_probabilities, property_weights,
    CategoryWeight, PropertyTable,
};
pub use mcmc::{
    draws_as_params, mcmc_sample, mcmc_sample_target, quantile_sorted, split_rhat, Chain,
    McmcConfig, McmcResult, TuningStep, RHAT_LIMIT,
};
pub use ml::{
    information_criteria, ml_fit, ml_fit_target, nelder_mead, MlConfig, MlResult, SimplexResult,
    StartSource, StartSummary,
};
pub use problem::Target;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::forcing::ForcingSeries;
use crate::model_space::PriorSpec;
use crate::spec::ModelSpec;

/// Which parts of the per-model pipeline run, and their budgets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub ml: MlConfig,
    pub mcmc: McmcConfig,
    pub bml: BmlConfig,
    /// Run MCMC and the BML estimate.
    pub bayes: bool,
    /// Start the ML search from chain draws instead of prior draws.
    pub ml_from_chain: bool,
    /// Run the ML search.
    pub optimize: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            ml: MlConfig::default(),
            mcmc: McmcConfig::default(),
            bml: BmlConfig::default(),
            bayes: true,
            ml_from_chain: true,
            optimize: true,
        }
    }
}

impl FitConfig {
    /// Same budgets with every seed replaced by `seed`.
    pub fn with_seed(&self, seed: u64) -> FitConfig {
        let mut out = self.clone();
        out.ml.seed = seed;
        out.mcmc.seed = seed;
        out.bml.seed = seed;
        out
    }
}

/// Everything inferred for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub name: String,
    pub n_obs: usize,
    /// Free-parameter count.
    pub k: usize,
    pub labels: Vec<String>,
    pub ml: Option<MlResult>,
    pub mcmc: Option<McmcResult>,
    pub bml: Option<BmlEstimate>,
    /// Stages that failed, with their error messages.
    pub failures: Vec<String>,
}

impl FitResult {
    pub fn aic(&self) -> Option<f64> {
        self.ml.as_ref().map(|m| m.aic)
    }

    pub fn bic(&self) -> Option<f64> {
        self.ml.as_ref().map(|m| m.bic)
    }

    pub fn log_bml(&self) -> Option<f64> {
        self.bml.as_ref().map(|b| b.log_bml)
    }
}

/// Runs MCMC, the BML estimate and ML for one model, as enabled. Stage failures are
/// recorded in the result; only invalid inputs are errors.
pub fn fit_model(
    spec: &ModelSpec,
    data: &Dataset,
    forcing: Option<&ForcingSeries>,
    prior: &PriorSpec,
    config: &FitConfig,
) -> Result<FitResult> {
    let target = Target::new(spec, data, forcing, prior)?;
    let spec = target.spec().clone();
    let mut out = FitResult {
        name: spec.name(),
        n_obs: data.len(),
        k: target.dim(),
        labels: target.labels(),
        spec,
        ml: None,
        mcmc: None,
        bml: None,
        failures: Vec::new(),
    };
    let mut starts = StartSource::Prior;
    if config.bayes {
        match mcmc_sample_target(&target, &config.mcmc, &[]) {
            Ok(chains) => {
                match bml_estimate_target(&target, &chains, &config.bml) {
                    Ok(b) => out.bml = Some(b),
                    Err(e) => out.failures.push(format!("bml: {e}")),
                }
                if config.ml_from_chain {
                    starts = StartSource::Draws(
                        chains
                            .pooled()
                            .iter()
                            .map(|d| target.expand(d))
                            .collect(),
                    );
                }
                out.mcmc = Some(chains);
            }
            Err(e) => out.failures.push(format!("mcmc: {e}")),
        }
    }
    if config.optimize {
        match ml_fit_target(&target, &config.ml, &starts) {
            Ok(m) => out.ml = Some(m),
            Err(e) => out.failures.push(format!("ml: {e}")),
        }
    }
    for f in &out.failures {
        log::warn!("{}: {f}", out.name);
    }
    Ok(out)
}
