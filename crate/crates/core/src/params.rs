//! Natural-scale model parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spec::{Correlation, ModelSpec, RANDOM_WALK_PULL};

/// Numeric parameters of a layered model on their natural scale.
///
/// Pulls are in 1/My, diffusions in log(size)/My^(1/2), the level in
/// log(size) and the regression coefficient in log(size) per unit of the
/// forcing series. Per-layer vectors hold one value, or one per site when
/// that parameter type is regional in that layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub pulls: Vec<Vec<f64>>,
    pub diffusions: Vec<Vec<f64>>,
    /// Per layer; only read for layers with intermediate correlation.
    #[serde(default)]
    pub correlations: Vec<f64>,
    pub level: Vec<f64>,
    #[serde(default)]
    pub beta: f64,
}

impl ParamVector {
    /// Global parameters: one pull and one diffusion per layer, one level.
    pub fn from_layers(pulls: &[f64], diffusions: &[f64], level: f64) -> Self {
        ParamVector {
            pulls: pulls.iter().map(|&a| vec![a]).collect(),
            diffusions: diffusions.iter().map(|&s| vec![s]).collect(),
            correlations: vec![0.0; pulls.len()],
            level: vec![level],
            beta: 0.0,
        }
    }

    pub fn with_correlation(mut self, layer: usize, rho: f64) -> Self {
        if self.correlations.len() < self.pulls.len() {
            self.correlations.resize(self.pulls.len(), 0.0);
        }
        self.correlations[layer] = rho;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_regional_pulls(mut self, layer: usize, pulls: Vec<f64>) -> Self {
        self.pulls[layer] = pulls;
        self
    }

    pub fn with_regional_diffusions(mut self, layer: usize, diffusions: Vec<f64>) -> Self {
        self.diffusions[layer] = diffusions;
        self
    }

    pub fn with_regional_level(mut self, level: Vec<f64>) -> Self {
        self.level = level;
        self
    }

    pub fn pull(&self, layer: usize, site: usize) -> f64 {
        pick(&self.pulls[layer], site)
    }

    pub fn diffusion(&self, layer: usize, site: usize) -> f64 {
        pick(&self.diffusions[layer], site)
    }

    pub fn level_at(&self, site: usize) -> f64 {
        pick(&self.level, site)
    }

    /// Correlation coefficient in effect for `layer` under `spec`.
    pub fn correlation(&self, spec: &ModelSpec, layer: usize) -> f64 {
        match spec.correlation[layer] {
            Correlation::None => 0.0,
            Correlation::Perfect => 1.0,
            Correlation::Intermediate => self.correlations.get(layer).copied().unwrap_or(0.0),
        }
    }

    /// Checks shapes and domains against a (normalized) spec.
    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        let l = spec.n_layers;
        let s = spec.n_sites;
        if self.pulls.len() != l || self.diffusions.len() != l {
            return Err(Error::DimensionMismatch(format!(
                "expected {l} layers of pulls and diffusions, got {} and {}",
                self.pulls.len(),
                self.diffusions.len()
            )));
        }
        for layer in 0..l {
            let np = if spec.regional_pull_layer() == Some(layer) { s } else { 1 };
            let nd = if spec.regional_diffusion_layer() == Some(layer) { s } else { 1 };
            if self.pulls[layer].len() != np {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} needs {np} pull value(s), got {}",
                    layer + 1,
                    self.pulls[layer].len()
                )));
            }
            if self.diffusions[layer].len() != nd {
                return Err(Error::DimensionMismatch(format!(
                    "layer {} needs {nd} diffusion value(s), got {}",
                    layer + 1,
                    self.diffusions[layer].len()
                )));
            }
            for &a in &self.pulls[layer] {
                if spec.pull_fixed(layer) {
                    if a != RANDOM_WALK_PULL {
                        return Err(Error::DomainError(format!(
                            "random-walk bottom layer requires pull {RANDOM_WALK_PULL}, got {a}"
                        )));
                    }
                } else if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::DomainError(format!(
                        "pull of layer {} must be positive and finite, got {a}",
                        layer + 1
                    )));
                }
            }
            for &sd in &self.diffusions[layer] {
                if spec.deterministic[layer] {
                    if sd != 0.0 {
                        return Err(Error::DomainError(format!(
                            "deterministic layer {} requires zero diffusion, got {sd}",
                            layer + 1
                        )));
                    }
                } else if !(sd >= 0.0 && sd.is_finite()) {
                    return Err(Error::DomainError(format!(
                        "diffusion of layer {} must be non-negative and finite, got {sd}",
                        layer + 1
                    )));
                }
            }
            if spec.correlation[layer] == Correlation::Intermediate {
                let rho = self.correlations.get(layer).copied().ok_or_else(|| {
                    Error::DimensionMismatch(format!("missing correlation for layer {}", layer + 1))
                })?;
                if !(rho > -1.0 && rho < 1.0) {
                    return Err(Error::DomainError(format!(
                        "correlation of layer {} must lie in (-1, 1), got {rho}",
                        layer + 1
                    )));
                }
            }
        }
        let nl = if spec.regional_level() { s } else { 1 };
        if self.level.len() != nl {
            return Err(Error::DimensionMismatch(format!(
                "expected {nl} level value(s), got {}",
                self.level.len()
            )));
        }
        if self.level.iter().any(|m| !m.is_finite()) || !self.beta.is_finite() {
            return Err(Error::DomainError("level and beta must be finite".into()));
        }
        Ok(())
    }
}

fn pick(v: &[f64], site: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[site]
    }
}
