//! Multi-start maximum likelihood with a Nelder–Mead simplex search on the
//! unconstrained scale.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::problem::Target;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forcing::ForcingSeries;
use crate::model_space::PriorSpec;
use crate::params::ParamVector;
use crate::spec::ModelSpec;

/// Budget and tolerance of the optimiser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlConfig {
    pub starts: usize,
    /// Likelihood evaluations per simplex run.
    pub max_evals: usize,
    /// Simplex diameter on the unconstrained scale that counts as converged.
    pub tolerance: f64,
    /// Initial simplex edge on the unconstrained scale.
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for MlConfig {
    fn default() -> Self {
        MlConfig {
            starts: 50,
            max_evals: 3000,
            tolerance: 1e-6,
            initial_step: 0.5,
            seed: 1,
        }
    }
}

/// Where starting points come from.
#[derive(Clone, Debug)]
pub enum StartSource {
    /// Independent prior draws.
    Prior,
    /// Full unconstrained vectors, e.g. posterior chain draws; spread evenly
    /// over the list.
    Draws(Vec<Vec<f64>>),
}

/// Outcome of one start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: Vec<f64>,
    pub initial_log_likelihood: f64,
    pub log_likelihood: f64,
    pub optimum: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlResult {
    /// Free unconstrained coordinates of the best optimum.
    pub unconstrained: Vec<f64>,
    pub params: ParamVector,
    pub log_likelihood: f64,
    /// Free-parameter count.
    pub k: usize,
    pub n_obs: usize,
    pub aic: f64,
    pub bic: f64,
    /// The best start met the simplex tolerance.
    pub converged: bool,
    pub starts: Vec<StartSummary>,
}

/// Outcome of a single simplex run (maximisation).
#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Maximises `f` from `x0` with the Nelder–Mead simplex method.
///
/// Non-finite values count as `-inf`, so the search simply contracts away
/// from them. Converged when the largest vertex distance from the best
/// vertex falls below `tol`.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    tol: f64,
    max_evals: usize,
) -> SimplexResult {
    let n = x0.len();
    let g = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    };
    if n == 0 {
        let value = -g(x0);
        return SimplexResult {
            x: Vec::new(),
            value,
            evaluations: 1,
            converged: true,
        };
    }
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        g(x)
    };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < tol && vals[0].is_finite() {
            converged = true;
            break;
        }
        if evals.get() >= max_evals {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(gamma);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(rho * alpha);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            simplex[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            vals[i] = eval(&shrunk);
            simplex[i] = shrunk;
        }
    }
    SimplexResult {
        x: simplex[0].clone(),
        value: -vals[0],
        evaluations: evals.get(),
        converged,
    }
}

/// `(AIC, BIC)` for a maximised log-likelihood with `k` free parameters.
pub fn information_criteria(log_likelihood: f64, k: usize, n_obs: usize) -> (f64, f64) {
    let k = k as f64;
    (
        2.0 * k - 2.0 * log_likelihood,
        k * (n_obs as f64).ln() - 2.0 * log_likelihood,
    )
}

/// Multi-start ML fit of one model.
pub fn ml_fit(
    spec: &ModelSpec,
    data: &Dataset,
    forcing: Option<&ForcingSeries>,
    prior: &PriorSpec,
    config: &MlConfig,
    starts: &StartSource,
) -> Result<MlResult> {
    let target = Target::new(spec, data, forcing, prior)?;
    ml_fit_target(&target, config, starts)
}

pub fn ml_fit_target(target: &Target<'_>, config: &MlConfig, starts: &StartSource) -> Result<MlResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_starts = config.starts.max(1);
    let points: Vec<Vec<f64>> = match starts {
        StartSource::Prior => (0..n_starts).map(|_| target.sample_prior(&mut rng)).collect(),
        StartSource::Draws(draws) if !draws.is_empty() => (0..n_starts.min(draws.len()))
            .map(|i| target.restrict(&draws[i * draws.len() / n_starts.min(draws.len())]))
            .collect(),
        StartSource::Draws(_) => {
            return Err(Error::DomainError("no draws to start from".into()));
        }
    };
    let ll = |x: &[f64]| target.log_likelihood(x);
    let mut summaries = Vec::with_capacity(points.len());
    for p in points {
        let initial = ll(&p);
        let mut s = SimplexResult {
            x: p.clone(),
            value: initial,
            evaluations: 1,
            converged: false,
        };
        if initial.is_finite() {
            s = nelder_mead(ll, &p, config.initial_step, config.tolerance, config.max_evals);
            // restart from the optimum to escape a collapsed simplex
            let again = nelder_mead(ll, &s.x, config.initial_step * 0.1, config.tolerance, config.max_evals);
            if again.value >= s.value {
                s = SimplexResult {
                    evaluations: s.evaluations + again.evaluations,
                    ..again
                };
            } else {
                s.evaluations += again.evaluations;
            }
        }
        summaries.push(StartSummary {
            start: p,
            initial_log_likelihood: initial,
            log_likelihood: s.value,
            optimum: s.x,
            evaluations: s.evaluations,
            converged: s.converged,
        });
    }
    let best = summaries
        .iter()
        .enumerate()
        .filter(|(_, s)| s.log_likelihood.is_finite())
        .max_by(|a, b| a.1.log_likelihood.total_cmp(&b.1.log_likelihood).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .ok_or(Error::AllStartsFailed)?;
    let b = &summaries[best];
    let k = target.dim();
    let n_obs = target.data().len();
    let (aic, bic) = information_criteria(b.log_likelihood, k, n_obs);
    Ok(MlResult {
        unconstrained: b.optimum.clone(),
        params: target.params(&b.optimum)?,
        log_likelihood: b.log_likelihood,
        k,
        n_obs,
        aic,
        bic,
        converged: b.converged,
        starts: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_finds_quadratic_maximum() {
        let f = |x: &[f64]| -(x[0] - 1.0).powi(2) - 3.0 * (x[1] + 2.0).powi(2);
        let r = nelder_mead(f, &[0.0, 0.0], 0.5, 1e-8, 5000);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn simplex_avoids_infinite_region() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NEG_INFINITY } else { -(x[0] - 0.1).powi(2) };
        let r = nelder_mead(f, &[2.0], 1.0, 1e-9, 2000);
        assert!((r.x[0] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn criteria_definitions() {
        let (aic, bic) = information_criteria(-100.0, 8, 205);
        assert_eq!(aic, 216.0);
        assert!((bic - (8.0 * 205f64.ln() + 200.0)).abs() < 1e-12);
        assert!((bic - 242.584).abs() < 1e-3);
    }

    #[test]
    fn single_observation_level_matches() {
        let spec = ModelSpec::new(1, 1);
        let data = Dataset::from_observations(1, vec![(0, 0.0, 1.7, 0.01)]).unwrap();
        let cfg = MlConfig {
            starts: 5,
            ..MlConfig::default()
        };
        let r = ml_fit(&spec, &data, None, &PriorSpec::default(), &cfg, &StartSource::Prior).unwrap();
        assert!((r.params.level[0] - 1.7).abs() < 1e-3);
    }

    #[test]
    fn all_failed_starts() {
        let spec = ModelSpec::new(1, 1);
        let data = Dataset::from_observations(1, vec![(0, 0.0, 1.7, 0.01)]).unwrap();
        let draws = vec![vec![f64::INFINITY, 0.0, 0.0]];
        let r = ml_fit(
            &spec,
            &data,
            None,
            &PriorSpec::default(),
            &MlConfig::default(),
            &StartSource::Draws(draws),
        );
        assert_eq!(r.unwrap_err(), Error::AllStartsFailed);
    }
}
