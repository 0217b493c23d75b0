//! Unconstrained reparametrisation and the independent-normal prior.
//!
//! Every free parameter maps to the real line: pulls and diffusions by
//! `log`, correlations by `atanh`, level and regression coefficient by the
//! identity. Fixed values (zero diffusion of deterministic layers, the
//! random-walk pull) have no coordinate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kalman::Z95;
use crate::linalg::LN_2PI;
use crate::params::ParamVector;
use crate::posterior::normal_cdf;
use crate::spec::{Correlation, ModelSpec, RANDOM_WALK_PULL};

/// One free coordinate of the unconstrained vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coord {
    Pull { layer: usize, site: Option<usize> },
    Diffusion { layer: usize, site: Option<usize> },
    Correlation { layer: usize },
    Level { site: Option<usize> },
    Beta,
}

impl Coord {
    /// Human label with one-based layer and site numbers, e.g. `dt_2,3`.
    pub fn label(&self) -> String {
        let site = |s: Option<usize>| s.map(|s| format!(",{}", s + 1)).unwrap_or_default();
        match *self {
            Coord::Pull { layer, site: s } => format!("dt_{}{}", layer + 1, site(s)),
            Coord::Diffusion { layer, site: s } => format!("sigma_{}{}", layer + 1, site(s)),
            Coord::Correlation { layer } => format!("rho_{}", layer + 1),
            Coord::Level { site: s } => format!("mu0{}", s.map(|s| format!("_{}", s + 1)).unwrap_or_default()),
            Coord::Beta => "beta".into(),
        }
    }
}

/// Ordering of the free coordinates for one model structure.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    spec: ModelSpec,
    coords: Vec<Coord>,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let spec = spec.normalized()?;
        let mut coords = Vec::new();
        let per_site = |regional: bool, n: usize| -> Vec<Option<usize>> {
            if regional {
                (0..n).map(Some).collect()
            } else {
                vec![None]
            }
        };
        for layer in 0..spec.n_layers {
            if !spec.pull_fixed(layer) {
                for site in per_site(spec.regional_pull_layer() == Some(layer), spec.n_sites) {
                    coords.push(Coord::Pull { layer, site });
                }
            }
            if !spec.deterministic[layer] {
                for site in per_site(spec.regional_diffusion_layer() == Some(layer), spec.n_sites) {
                    coords.push(Coord::Diffusion { layer, site });
                }
            }
            if spec.correlation[layer] == Correlation::Intermediate {
                coords.push(Coord::Correlation { layer });
            }
        }
        for site in per_site(spec.regional_level(), spec.n_sites) {
            coords.push(Coord::Level { site });
        }
        if spec.forcing_layer.is_some() {
            coords.push(Coord::Beta);
        }
        Ok(ParamLayout { spec, coords })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.coords.iter().map(Coord::label).collect()
    }

    pub fn to_unconstrained(&self, params: &ParamVector) -> Result<Vec<f64>> {
        params.check(&self.spec)?;
        let site_idx = |s: Option<usize>| s.unwrap_or(0);
        self.coords
            .iter()
            .map(|c| {
                let v = match *c {
                    Coord::Pull { layer, site } => {
                        let a = params.pull(layer, site_idx(site));
                        a.ln()
                    }
                    Coord::Diffusion { layer, site } => {
                        let s = params.diffusion(layer, site_idx(site));
                        if s <= 0.0 {
                            return Err(Error::DomainError(format!(
                                "diffusion of stochastic layer {} must be positive, got {s}",
                                layer + 1
                            )));
                        }
                        s.ln()
                    }
                    Coord::Correlation { layer } => params.correlations[layer].atanh(),
                    Coord::Level { site } => params.level_at(site_idx(site)),
                    Coord::Beta => params.beta,
                };
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::DomainError(format!("{} is on the boundary", c.label())))
                }
            })
            .collect()
    }

    pub fn from_unconstrained(&self, v: &[f64]) -> Result<ParamVector> {
        if v.len() != self.coords.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} unconstrained coordinates, got {}",
                self.coords.len(),
                v.len()
            )));
        }
        let spec = &self.spec;
        let (l, s) = (spec.n_layers, spec.n_sites);
        let width = |regional: bool| if regional { s } else { 1 };
        let mut params = ParamVector {
            pulls: (0..l)
                .map(|layer| {
                    let fill = if spec.pull_fixed(layer) { RANDOM_WALK_PULL } else { 0.0 };
                    vec![fill; width(spec.regional_pull_layer() == Some(layer))]
                })
                .collect(),
            diffusions: (0..l)
                .map(|layer| vec![0.0; width(spec.regional_diffusion_layer() == Some(layer))])
                .collect(),
            correlations: vec![0.0; l],
            level: vec![0.0; width(spec.regional_level())],
            beta: 0.0,
        };
        for (c, &x) in self.coords.iter().zip(v) {
            if !x.is_finite() {
                return Err(Error::DomainError(format!("{} is not finite", c.label())));
            }
            match *c {
                Coord::Pull { layer, site } => params.pulls[layer][site.unwrap_or(0)] = x.exp(),
                Coord::Diffusion { layer, site } => {
                    params.diffusions[layer][site.unwrap_or(0)] = x.exp()
                }
                Coord::Correlation { layer } => params.correlations[layer] = x.tanh(),
                Coord::Level { site } => params.level[site.unwrap_or(0)] = x,
                Coord::Beta => params.beta = x,
            }
        }
        params.check(spec).map_err(|e| match e {
            Error::DomainError(m) => Error::DomainError(format!("outside the representable range: {m}")),
            other => other,
        })?;
        Ok(params)
    }
}

/// Unconstrained vector of `params` for `spec`.
pub fn to_unconstrained(spec: &ModelSpec, params: &ParamVector) -> Result<Vec<f64>> {
    ParamLayout::new(spec)?.to_unconstrained(params)
}

pub fn from_unconstrained(spec: &ModelSpec, v: &[f64]) -> Result<ParamVector> {
    ParamLayout::new(spec)?.from_unconstrained(v)
}

/// Normal distribution on an unconstrained coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub sd: f64,
}

impl NormalPrior {
    /// The normal whose central 95% interval is `[lo, hi]`.
    pub fn from_interval(lo: f64, hi: f64) -> Self {
        NormalPrior {
            mean: 0.5 * (lo + hi),
            sd: (hi - lo) / (2.0 * Z95),
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * (LN_2PI + z * z) - self.sd.ln()
    }
}

/// Prior 95% intervals per parameter type on the natural scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    /// Characteristic time `1/α` in My.
    pub characteristic_time: [f64; 2],
    pub diffusion: [f64; 2],
    /// `exp(μ0)` on the original measurement scale.
    pub exp_level: [f64; 2],
    pub beta: [f64; 2],
    pub correlation: [f64; 2],
    /// Impose the pull identification restriction (top pull largest).
    pub pull_ordering: bool,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            characteristic_time: [1e-3, 1e3],
            diffusion: [0.02, 3.5],
            exp_level: [1e-3, 1e3],
            beta: [-1.0, 1.0],
            correlation: [-0.18, 0.98],
            pull_ordering: false,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, iv: [f64; 2]| {
            if iv[0] > 0.0 && iv[1] > iv[0] && iv[1].is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("prior interval for {name} must satisfy 0 < lower < upper")))
            }
        };
        positive("characteristic_time", self.characteristic_time)?;
        positive("diffusion", self.diffusion)?;
        positive("exp_level", self.exp_level)?;
        if !(self.beta[1] > self.beta[0]) || !self.beta.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("prior interval for beta must satisfy lower < upper".into()));
        }
        let [lo, hi] = self.correlation;
        if !(lo > -1.0 && hi < 1.0 && hi > lo) {
            return Err(Error::Config("prior interval for correlation must lie inside (-1, 1)".into()));
        }
        Ok(())
    }

    /// Prior on the unconstrained coordinate `c`.
    pub fn normal_for(&self, c: &Coord) -> NormalPrior {
        match c {
            Coord::Pull { .. } => NormalPrior::from_interval(
                -self.characteristic_time[1].ln(),
                -self.characteristic_time[0].ln(),
            ),
            Coord::Diffusion { .. } => {
                NormalPrior::from_interval(self.diffusion[0].ln(), self.diffusion[1].ln())
            }
            Coord::Correlation { .. } => {
                NormalPrior::from_interval(self.correlation[0].atanh(), self.correlation[1].atanh())
            }
            Coord::Level { .. } => {
                NormalPrior::from_interval(self.exp_level[0].ln(), self.exp_level[1].ln())
            }
            Coord::Beta => NormalPrior::from_interval(self.beta[0], self.beta[1]),
        }
    }

    /// Indices of the pulls subject to the ordering restriction, top first.
    fn ordered_pulls(&self, layout: &ParamLayout) -> Vec<usize> {
        if !self.pull_ordering || layout.spec().regional_pull_layer().is_some() {
            return Vec::new();
        }
        layout
            .coords()
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, Coord::Pull { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    /// Log prior density of an unconstrained vector.
    ///
    /// Under the ordering restriction the pulls below the top one are
    /// independent normals truncated to the ordered region given the top
    /// pull, renormalised so the top pull keeps its unrestricted marginal.
    pub fn log_density(&self, layout: &ParamLayout, v: &[f64]) -> f64 {
        let mut lp: f64 = layout
            .coords()
            .iter()
            .zip(v)
            .map(|(c, &x)| self.normal_for(c).log_density(x))
            .sum();
        let ordered = self.ordered_pulls(layout);
        if ordered.len() > 1 {
            for w in ordered.windows(2) {
                if !(v[w[0]] > v[w[1]]) {
                    return f64::NEG_INFINITY;
                }
            }
            let prior = self.normal_for(&layout.coords()[ordered[0]]);
            let below = (ordered.len() - 1) as f64;
            let u = normal_cdf((v[ordered[0]] - prior.mean) / prior.sd);
            let log_fact: f64 = (1..ordered.len()).map(|k| (k as f64).ln()).sum();
            lp -= below * u.ln() - log_fact;
        }
        lp
    }

    /// Independent draw from the prior on the unconstrained scale.
    pub fn sample<R: Rng + ?Sized>(&self, layout: &ParamLayout, rng: &mut R) -> Vec<f64> {
        let mut v: Vec<f64> = layout
            .coords()
            .iter()
            .map(|c| {
                let p = self.normal_for(c);
                p.mean + p.sd * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let ordered = self.ordered_pulls(layout);
        if ordered.len() > 1 {
            let p = self.normal_for(&layout.coords()[ordered[0]]);
            let std = Normal::new(0.0, 1.0).expect("standard normal");
            let top = v[ordered[0]];
            let cap = normal_cdf((top - p.mean) / p.sd);
            let mut lower: Vec<f64> = ordered[1..]
                .iter()
                .map(|_| {
                    let u: f64 = rng.random::<f64>() * cap;
                    p.mean + p.sd * std.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16))
                })
                .collect();
            lower.sort_by(|a, b| b.total_cmp(a));
            for (i, x) in ordered[1..].iter().zip(lower) {
                v[*i] = x.min(top - 1e-12);
            }
        }
        v
    }

    /// Draw of the natural-scale parameters.
    pub fn sample_params<R: Rng + ?Sized>(&self, layout: &ParamLayout, rng: &mut R) -> Result<ParamVector> {
        layout.from_unconstrained(&self.sample(layout, rng))
    }
}

/// `log π(θ | M)` on the unconstrained scale.
pub fn log_prior(spec: &ModelSpec, params: &ParamVector, prior: &PriorSpec) -> Result<f64> {
    let layout = ParamLayout::new(spec)?;
    let v = layout.to_unconstrained(params)?;
    Ok(prior.log_density(&layout, &v))
}
