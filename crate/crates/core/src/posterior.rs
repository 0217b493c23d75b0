//! State posteriors that integrate over parameter uncertainty: a
//! Gaussian mixture of smoothed posteriors, one per posterior parameter draw.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forcing::ForcingSeries;
use crate::kalman::{sample_conditional, smooth_system, StatePosterior};
use crate::params::ParamVector;
use crate::spec::ModelSpec;
use crate::system::build_system_jittered;

/// Mixture summary per query time and state component.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsemblePosterior {
    pub query_times: Vec<f64>,
    pub n_draws: usize,
    pub mean: Vec<DVector<f64>>,
    pub variance: Vec<DVector<f64>>,
    /// 2.5% quantile of the mixture.
    pub lower: Vec<DVector<f64>>,
    /// 97.5% quantile of the mixture.
    pub upper: Vec<DVector<f64>>,
    /// One conditional realisation per draw, when requested.
    pub realizations: Option<Vec<Vec<DVector<f64>>>>,
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Quantile of an equally weighted mixture of normals, by bisection on the
/// mixture CDF.
pub fn mixture_quantile(means: &[f64], sds: &[f64], prob: f64) -> f64 {
    let cdf = |x: f64| {
        means
            .iter()
            .zip(sds)
            .map(|(&m, &s)| {
                if s > 0.0 {
                    normal_cdf((x - m) / s)
                } else if x >= m {
                    1.0
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / means.len() as f64
    };
    let mut lo = means
        .iter()
        .zip(sds)
        .map(|(m, s)| m - 10.0 * s)
        .fold(f64::INFINITY, f64::min);
    let mut hi = means
        .iter()
        .zip(sds)
        .map(|(m, s)| m + 10.0 * s)
        .fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Mixture of smoothed posteriors over parameter draws.
///
/// With `realization_seed` set, one conditional realisation of the state is
/// drawn per parameter set, using seed `realization_seed + draw index`.
pub fn posterior_process_draws(
    spec: &ModelSpec,
    draws: &[ParamVector],
    data: &Dataset,
    forcing: Option<&ForcingSeries>,
    query_times: &[f64],
    realization_seed: Option<u64>,
) -> Result<EnsemblePosterior> {
    if draws.is_empty() {
        return Err(Error::DomainError("no parameter draws supplied".into()));
    }
    type PerDraw = Result<(StatePosterior, Option<Vec<DVector<f64>>>)>;
    let per_draw: Vec<PerDraw> = draws
        .par_iter()
        .enumerate()
        .map(|(i, params)| {
            let sys = build_system_jittered(spec, params)?;
            let post = smooth_system(&sys, data, forcing, query_times)?;
            let real = match realization_seed {
                Some(seed) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                    Some(sample_conditional(&sys, data, forcing, query_times, &mut rng)?)
                }
                None => None,
            };
            Ok((post, real))
        })
        .collect();
    let mut posts = Vec::with_capacity(draws.len());
    let mut reals = Vec::new();
    for r in per_draw {
        let (post, real) = r?;
        posts.push(post);
        if let Some(real) = real {
            reals.push(real);
        }
    }

    let n = posts.len() as f64;
    let nq = query_times.len();
    let p = posts[0].means.first().map_or(0, |m| m.len());
    let mut out = EnsemblePosterior {
        query_times: query_times.to_vec(),
        n_draws: posts.len(),
        mean: Vec::with_capacity(nq),
        variance: Vec::with_capacity(nq),
        lower: Vec::with_capacity(nq),
        upper: Vec::with_capacity(nq),
        realizations: realization_seed.map(|_| reals),
    };
    for k in 0..nq {
        let mut mean = DVector::zeros(p);
        let mut var = DVector::zeros(p);
        let mut lower = DVector::zeros(p);
        let mut upper = DVector::zeros(p);
        for c in 0..p {
            let ms: Vec<f64> = posts.iter().map(|s| s.means[k][c]).collect();
            let sds: Vec<f64> = posts
                .iter()
                .map(|s| s.covs[k][(c, c)].max(0.0).sqrt())
                .collect();
            let m = ms.iter().sum::<f64>() / n;
            // total variance = mean of variances + variance of means
            let within = sds.iter().map(|s| s * s).sum::<f64>() / n;
            let between = ms.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            mean[c] = m;
            var[c] = within + between;
            lower[c] = mixture_quantile(&ms, &sds, 0.025);
            upper[c] = mixture_quantile(&ms, &sds, 0.975);
        }
        out.mean.push(mean);
        out.variance.push(var);
        out.lower.push(lower);
        out.upper.push(upper);
    }
    Ok(out)
}
