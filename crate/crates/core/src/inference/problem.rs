//! The unnormalised posterior of one model on the unconstrained scale.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forcing::ForcingSeries;
use crate::kalman::log_likelihood;
use crate::model_space::{ParamLayout, PriorSpec};
use crate::params::ParamVector;
use crate::spec::ModelSpec;

/// Likelihood and prior of one model, with optional fixed coordinates.
///
/// Samplers and optimisers only see the free coordinates. Any failure to
/// evaluate (domain errors, overflow) yields `-inf`.
#[derive(Clone, Debug)]
pub struct Target<'a> {
    layout: ParamLayout,
    data: &'a Dataset,
    forcing: Option<&'a ForcingSeries>,
    prior: PriorSpec,
    fixed: Vec<Option<f64>>,
}

impl<'a> Target<'a> {
    pub fn new(
        spec: &ModelSpec,
        data: &'a Dataset,
        forcing: Option<&'a ForcingSeries>,
        prior: &PriorSpec,
    ) -> Result<Self> {
        let layout = ParamLayout::new(spec)?;
        if data.n_sites() != layout.spec().n_sites {
            return Err(Error::DimensionMismatch(format!(
                "model has {} sites, data has {}",
                layout.spec().n_sites,
                data.n_sites()
            )));
        }
        if layout.spec().forcing_layer.is_some() && forcing.is_none() {
            return Err(Error::InvalidSpec(format!(
                "{} needs a forcing series",
                layout.spec()
            )));
        }
        let fixed = vec![None; layout.dim()];
        Ok(Target {
            layout,
            data,
            forcing,
            prior: prior.clone(),
            fixed,
        })
    }

    /// Holds coordinate `index` at the unconstrained value `value`.
    pub fn with_fixed(mut self, index: usize, value: f64) -> Self {
        self.fixed[index] = Some(value);
        self
    }

    /// Holds every coordinate of `params` except those listed in `free`.
    pub fn fixing_all_but(mut self, params: &ParamVector, free: &[usize]) -> Result<Self> {
        let v = self.layout.to_unconstrained(params)?;
        for (i, x) in v.into_iter().enumerate() {
            if !free.contains(&i) {
                self.fixed[i] = Some(x);
            }
        }
        Ok(self)
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn spec(&self) -> &ModelSpec {
        self.layout.spec()
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn forcing(&self) -> Option<&ForcingSeries> {
        self.forcing
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    /// Number of free coordinates.
    pub fn dim(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_none()).count()
    }

    /// Labels of the free coordinates.
    pub fn labels(&self) -> Vec<String> {
        self.layout
            .labels()
            .into_iter()
            .zip(&self.fixed)
            .filter(|(_, f)| f.is_none())
            .map(|(l, _)| l)
            .collect()
    }

    /// Full unconstrained vector from the free coordinates.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut it = free.iter();
        self.fixed
            .iter()
            .map(|f| match f {
                Some(v) => *v,
                None => *it.next().expect("free coordinate count"),
            })
            .collect()
    }

    /// Free coordinates of a full unconstrained vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        full.iter()
            .zip(&self.fixed)
            .filter(|(_, f)| f.is_none())
            .map(|(x, _)| *x)
            .collect()
    }

    pub fn params(&self, free: &[f64]) -> Result<ParamVector> {
        self.layout.from_unconstrained(&self.expand(free))
    }

    pub fn log_likelihood(&self, free: &[f64]) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        match self.params(free) {
            Ok(p) => match log_likelihood(self.spec(), &p, self.data, self.forcing) {
                Ok(ll) if ll.is_finite() => ll,
                _ => f64::NEG_INFINITY,
            },
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Log prior density of the free coordinates given the fixed ones.
    pub fn log_prior(&self, free: &[f64]) -> f64 {
        let full = self.expand(free);
        let mut lp = self.prior.log_density(&self.layout, &full);
        for (c, (x, f)) in self.layout.coords().iter().zip(full.iter().zip(&self.fixed)) {
            if f.is_some() {
                lp -= self.prior.normal_for(c).log_density(*x);
            }
        }
        lp
    }

    /// `(log posterior, log likelihood)`, both `-inf` when outside the support.
    pub fn evaluate(&self, free: &[f64]) -> (f64, f64) {
        let lp = self.log_prior(free);
        if !lp.is_finite() {
            return (f64::NEG_INFINITY, f64::NEG_INFINITY);
        }
        let ll = self.log_likelihood(free);
        (lp + ll, ll)
    }

    /// Prior draw of the free coordinates.
    pub fn sample_prior<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.restrict(&self.prior.sample(&self.layout, rng))
    }
}
