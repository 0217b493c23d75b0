//! Exact likelihood (Kalman filter) and latent-state posterior (Kalman
//! smoother, forward-filter backward-sampling) for the layered model
//! observed through noisy sample means at irregular times.
//!
//! The recursion starts from the stationary law of the unforced system. With
//! a forcing series the start is moved back to the series start (if that is
//! earlier) so the forcing-induced mean offset builds up from there.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};
use crate::forcing::ForcingSeries;
use crate::linalg::{gaussian_logpdf, pinv_sym, psd_sqrt, symmetrize};
use crate::params::ParamVector;
use crate::spec::ModelSpec;
use crate::system::{build_system_jittered, SystemMatrices};

const SMOOTHER_PINV_TOL: f64 = 1e-14;

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Posterior mean and covariance of the full state at a list of times.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatePosterior {
    pub query_times: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

impl StatePosterior {
    /// Mean, lower and upper 95% bounds of state component `idx` at query `k`.
    pub fn band(&self, k: usize, idx: usize) -> (f64, f64, f64) {
        let m = self.means[k][idx];
        let sd = self.covs[k][(idx, idx)].max(0.0).sqrt();
        (m, m - Z95 * sd, m + Z95 * sd)
    }
}

pub(crate) fn validate_inputs(
    spec: &ModelSpec,
    data: &Dataset,
    forcing: Option<&ForcingSeries>,
) -> Result<()> {
    if data.n_sites() != spec.n_sites {
        return Err(Error::DimensionMismatch(format!(
            "model has {} site(s) but the data has {}",
            spec.n_sites,
            data.n_sites()
        )));
    }
    if spec.forcing_layer.is_some() && forcing.is_none() {
        return Err(Error::DimensionMismatch(
            "model is forced but no forcing series was given".into(),
        ));
    }
    Ok(())
}

/// Start of the recursion for a first time of interest `first`.
pub(crate) fn start_time(sys: &SystemMatrices, first: f64, forcing: Option<&ForcingSeries>) -> f64 {
    match forcing {
        Some(f) if sys.spec().forcing_layer.is_some() => first.min(f.start()),
        _ => first,
    }
}

/// Measurement update with all records sharing one time. Returns the log
/// density of the observations given the predicted state.
fn update(
    sys: &SystemMatrices,
    mean: &mut DVector<f64>,
    cov: &mut DMatrix<f64>,
    recs: &[Record],
) -> Result<f64> {
    let spec = sys.spec();
    let p = mean.len();
    let k = recs.len();
    let idx: Vec<usize> = recs.iter().map(|r| spec.index(0, r.site)).collect();

    let resid = DVector::from_fn(k, |i, _| recs[i].y - mean[idx[i]]);
    let pht = DMatrix::from_fn(p, k, |r, c| cov[(r, idx[c])]);
    let mut s = DMatrix::from_fn(k, k, |r, c| pht[(idx[r], c)]);
    for (i, rec) in recs.iter().enumerate() {
        s[(i, i)] += rec.noise_var();
    }
    symmetrize(&mut s);
    let ll = gaussian_logpdf(&resid, &s)?;

    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NonFiniteResult("innovation covariance".into()))?;
    // gain K = P Hᵀ S⁻¹
    let gain = chol.solve(&pht.transpose()).transpose();
    *mean += &gain * resid;

    // Joseph form: (I − KH) P (I − KH)ᵀ + K R Kᵀ
    let mut ikh = DMatrix::<f64>::identity(p, p);
    for (c, &j) in idx.iter().enumerate() {
        for r in 0..p {
            ikh[(r, j)] -= gain[(r, c)];
        }
    }
    let noise = DMatrix::from_diagonal(&DVector::from_fn(k, |i, _| recs[i].noise_var()));
    let mut next = &ikh * &*cov * ikh.transpose() + &gain * noise * gain.transpose();
    symmetrize(&mut next);
    *cov = next;
    Ok(ll)
}

/// `log f(D | θ, M)`; the empty dataset has log-likelihood zero.
pub fn log_likelihood(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &Dataset,
    forcing: Option<&ForcingSeries>,
) -> Result<f64> {
    let sys = build_system_jittered(spec, params)?;
    log_likelihood_system(&sys, data, forcing)
}

/// Log-likelihood for an already built system.
pub fn log_likelihood_system(
    sys: &SystemMatrices,
    data: &Dataset,
    forcing: Option<&ForcingSeries>,
) -> Result<f64> {
    validate_inputs(sys.spec(), data, forcing)?;
    let Some(first) = data.first_time() else {
        return Ok(0.0);
    };
    let (mut mean, mut cov) = sys.stationary_moments()?;
    let mut t = start_time(sys, first, forcing);
    let mut ll = 0.0;
    for (time, recs) in data.groups() {
        let (m, c) = sys.transition_moments(&mean, &cov, t, time, forcing)?;
        mean = m;
        cov = c;
        t = time;
        ll += update(sys, &mut mean, &mut cov, recs)?;
    }
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::NonFiniteResult("log-likelihood".into()))
    }
}

/// Stored forward pass over the merged grid of observation and query times.
struct Forward {
    times: Vec<f64>,
    pred_mean: Vec<DVector<f64>>,
    pred_cov: Vec<DMatrix<f64>>,
    filt_mean: Vec<DVector<f64>>,
    filt_cov: Vec<DMatrix<f64>>,
    /// Transition matrix from grid point k − 1 to k (identity at k = 0).
    phi: Vec<DMatrix<f64>>,
}

impl Forward {
    fn run(
        sys: &SystemMatrices,
        data: &Dataset,
        forcing: Option<&ForcingSeries>,
        query_times: &[f64],
    ) -> Result<Forward> {
        validate_inputs(sys.spec(), data, forcing)?;
        if query_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::DomainError("query times must be finite".into()));
        }
        let groups = data.groups();
        let mut times: Vec<f64> = groups
            .iter()
            .map(|g| g.0)
            .chain(query_times.iter().copied())
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();

        let p = sys.dim();
        let n = times.len();
        let mut fw = Forward {
            times,
            pred_mean: Vec::with_capacity(n),
            pred_cov: Vec::with_capacity(n),
            filt_mean: Vec::with_capacity(n),
            filt_cov: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
        };
        if n == 0 {
            return Ok(fw);
        }
        let (mut mean, mut cov) = sys.stationary_moments()?;
        let mut t = start_time(sys, fw.times[0], forcing);
        let mut g = 0;
        for k in 0..n {
            let time = fw.times[k];
            let tr = sys.transition(time - t)?;
            mean = &tr.phi * &mean + sys.drift(t, time, forcing)?;
            let mut c = &tr.phi * &cov * tr.phi.transpose() + &tr.cov;
            symmetrize(&mut c);
            cov = c;
            fw.phi.push(if k == 0 { DMatrix::identity(p, p) } else { tr.phi });
            fw.pred_mean.push(mean.clone());
            fw.pred_cov.push(cov.clone());
            if g < groups.len() && groups[g].0 == time {
                update(sys, &mut mean, &mut cov, groups[g].1)?;
                g += 1;
            }
            fw.filt_mean.push(mean.clone());
            fw.filt_cov.push(cov.clone());
            t = time;
        }
        Ok(fw)
    }

    fn smoother_gain(&self, k: usize) -> DMatrix<f64> {
        let inv = pinv_sym(&self.pred_cov[k + 1], SMOOTHER_PINV_TOL);
        &self.filt_cov[k] * self.phi[k + 1].transpose() * inv
    }

    fn position(&self, t: f64) -> usize {
        self.times
            .binary_search_by(|x| x.total_cmp(&t))
            .expect("query time is on the grid")
    }

    /// Rauch–Tung–Striebel smoothing over the whole grid.
    fn smooth(&self) -> (Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
        let n = self.times.len();
        let mut means = self.filt_mean.clone();
        let mut covs = self.filt_cov.clone();
        for k in (0..n.saturating_sub(1)).rev() {
            let gain = self.smoother_gain(k);
            let dm = &means[k + 1] - &self.pred_mean[k + 1];
            means[k] = &self.filt_mean[k] + &gain * dm;
            let dc = &covs[k + 1] - &self.pred_cov[k + 1];
            let mut c = &self.filt_cov[k] + &gain * dc * gain.transpose();
            symmetrize(&mut c);
            covs[k] = c;
        }
        (means, covs)
    }

    /// One joint draw of the state on the grid, conditional on the data.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<DVector<f64>> {
        let n = self.times.len();
        let mut out = vec![DVector::zeros(0); n];
        if n == 0 {
            return out;
        }
        out[n - 1] = draw(&self.filt_mean[n - 1], &self.filt_cov[n - 1], rng);
        for k in (0..n - 1).rev() {
            let gain = self.smoother_gain(k);
            let m = &self.filt_mean[k] + &gain * (&out[k + 1] - &self.pred_mean[k + 1]);
            let mut c = &self.filt_cov[k] - &gain * &self.pred_cov[k + 1] * gain.transpose();
            symmetrize(&mut c);
            out[k] = draw(&m, &c, rng);
        }
        out
    }
}

/// Draw from `N(mean, cov)` for a positive semidefinite `cov`.
pub fn draw<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let root = psd_sqrt(cov);
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + root * z
}

/// Smoothed (full-information) posterior of all state components at
/// `query_times`, returned in the order given.
pub fn smooth(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &Dataset,
    forcing: Option<&ForcingSeries>,
    query_times: &[f64],
) -> Result<StatePosterior> {
    let sys = build_system_jittered(spec, params)?;
    smooth_system(&sys, data, forcing, query_times)
}

pub fn smooth_system(
    sys: &SystemMatrices,
    data: &Dataset,
    forcing: Option<&ForcingSeries>,
    query_times: &[f64],
) -> Result<StatePosterior> {
    let fw = Forward::run(sys, data, forcing, query_times)?;
    let (means, covs) = fw.smooth();
    let mut out = StatePosterior {
        query_times: query_times.to_vec(),
        means: Vec::with_capacity(query_times.len()),
        covs: Vec::with_capacity(query_times.len()),
    };
    for &t in query_times {
        let k = fw.position(t);
        out.means.push(means[k].clone());
        out.covs.push(covs[k].clone());
    }
    Ok(out)
}

/// Filtered (data up to and including `t`) moments at the query times.
pub fn filter_at(
    sys: &SystemMatrices,
    data: &Dataset,
    forcing: Option<&ForcingSeries>,
    query_times: &[f64],
) -> Result<StatePosterior> {
    let fw = Forward::run(sys, data, forcing, query_times)?;
    let mut out = StatePosterior {
        query_times: query_times.to_vec(),
        means: Vec::new(),
        covs: Vec::new(),
    };
    for &t in query_times {
        let k = fw.position(t);
        out.means.push(fw.filt_mean[k].clone());
        out.covs.push(fw.filt_cov[k].clone());
    }
    Ok(out)
}

/// One realisation of the full state at `query_times` conditional on the
/// data (forward filtering, backward sampling).
pub fn sample_conditional<R: Rng + ?Sized>(
    sys: &SystemMatrices,
    data: &Dataset,
    forcing: Option<&ForcingSeries>,
    query_times: &[f64],
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let fw = Forward::run(sys, data, forcing, query_times)?;
    let path = fw.sample(rng);
    Ok(query_times.iter().map(|&t| path[fw.position(t)].clone()).collect())
}
