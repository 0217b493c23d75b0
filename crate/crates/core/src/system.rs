//! System matrices of the layered linear SDE
//! `dX = (m(t) + A X) dt + Σ dW` and its exact Gaussian moments.
//!
//! The state is ordered layer-major: component `(layer, site)` sits at
//! `layer * n_sites + site`, top layer first. With this ordering the pull
//! matrix is upper triangular: row `(i, j)` has `-α_ij` on the diagonal and
//! `+α_ij` in column `(i + 1, j)`.
//!
//! Moments are computed in the eigenbasis `A = V⁻¹ Λ V`, where `V` holds the
//! left eigenvectors. Because `A` is triangular its right eigenvectors form
//! a unit upper-triangular matrix, obtained by back substitution. When two
//! coupled pulls are close, that basis becomes ill-conditioned, and the
//! transition is instead computed from the matrix exponential and the
//! stationary covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forcing::{phi1, ForcingSeries};
use crate::linalg::{all_finite, lyapunov_upper, symmetrize};
use crate::params::ParamVector;
use crate::spec::{Correlation, ModelSpec};

/// Relative gap below which two coupled pulls count as equal.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// Relative size of the additive pull jitter applied to degenerate pulls.
pub const PULL_JITTER: f64 = 1e-6;

/// Condition number of the eigenvector basis above which the
/// matrix-exponential route is used for transitions.
const EIGEN_CONDITION_LIMIT: f64 = 1e5;

/// Eigendecomposition `A = R Λ V` with `V = R⁻¹`.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: DVector<f64>,
    /// Right eigenvectors as columns (`V⁻¹`).
    pub right: DMatrix<f64>,
    /// Left eigenvectors as rows (`V`).
    pub left: DMatrix<f64>,
    /// `‖V⁻¹‖∞ ‖V‖∞`.
    pub condition: f64,
}

/// Realised system for one model structure and parameter vector.
#[derive(Clone, Debug)]
pub struct SystemMatrices {
    spec: ModelSpec,
    /// Pull matrix `A`.
    pub pull: DMatrix<f64>,
    /// Diffusion matrix `Σ` (p × q).
    pub sigma: DMatrix<f64>,
    /// `Σ Σᵀ`.
    pub noise_cov: DMatrix<f64>,
    /// Constant drift (`α_bottom · μ0` on the bottom layer).
    pub m_const: DVector<f64>,
    /// Coefficients multiplying the forcing value `T(t)` (`α_i · β` on the forced layer).
    pub m_forcing: DVector<f64>,
    pub eigen: Eigensystem,
    /// True when pulls were jittered to break a degeneracy.
    pub jittered: bool,
    rotated_noise: DMatrix<f64>,
    rotated_const: DVector<f64>,
    rotated_forcing: DVector<f64>,
    stationary_cov: DMatrix<f64>,
}

/// One-step transition over a time gap: `X(t+Δ) = Φ X(t) + drift + N(0, cov)`.
#[derive(Clone, Debug)]
pub struct Transition {
    pub phi: DMatrix<f64>,
    pub cov: DMatrix<f64>,
}

/// Builds the system matrices, failing with
/// [`Error::DegenerateEigensystem`] when two coupled pulls coincide.
pub fn build_system(spec: &ModelSpec, params: &ParamVector) -> Result<SystemMatrices> {
    build(spec, params, false)
}

/// Like [`build_system`], but degenerate coupled pulls are moved apart by
/// `±PULL_JITTER · α` before the decomposition.
pub fn build_system_jittered(spec: &ModelSpec, params: &ParamVector) -> Result<SystemMatrices> {
    build(spec, params, true)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= DEGENERACY_GAP * a.abs().max(b.abs())
}

/// Per-row pulls with colliding layers of the same site pushed apart.
fn jitter_rows(spec: &ModelSpec, rows: &mut [f64]) -> bool {
    let mut changed = false;
    for site in 0..spec.n_sites {
        for layer in 1..spec.n_layers {
            let collides = |rows: &[f64], value: f64| {
                (0..layer).any(|k| close(rows[spec.index(k, site)], value))
            };
            let target = spec.index(layer, site);
            if !collides(rows, rows[target]) {
                continue;
            }
            // a fixed random-walk pull stays put; move the partner above it instead
            if spec.pull_fixed(layer) {
                for k in 0..layer {
                    let idx = spec.index(k, site);
                    if close(rows[idx], rows[target]) {
                        rows[idx] += PULL_JITTER * rows[idx];
                        changed = true;
                    }
                }
                continue;
            }
            let base = rows[target];
            for step in 1..=16 {
                let sign = if step % 2 == 1 { 1.0 } else { -1.0 };
                let candidate = base + sign * ((step + 1) / 2) as f64 * PULL_JITTER * base;
                if !collides(rows, candidate) {
                    rows[target] = candidate;
                    changed = true;
                    break;
                }
            }
        }
    }
    changed
}

fn build(spec: &ModelSpec, params: &ParamVector, jitter: bool) -> Result<SystemMatrices> {
    let spec = spec.normalized()?;
    params.check(&spec)?;
    let (n_layers, n_sites) = (spec.n_layers, spec.n_sites);
    let p = spec.state_dim();

    let mut rows = vec![0.0; p];
    for layer in 0..n_layers {
        for site in 0..n_sites {
            rows[spec.index(layer, site)] = params.pull(layer, site);
        }
    }
    let jittered = jitter && jitter_rows(&spec, &mut rows);

    let mut pull = DMatrix::zeros(p, p);
    for layer in 0..n_layers {
        for site in 0..n_sites {
            let r = spec.index(layer, site);
            pull[(r, r)] = -rows[r];
            if layer + 1 < n_layers {
                pull[(r, spec.index(layer + 1, site))] = rows[r];
            }
        }
    }

    let sigma = diffusion_matrix(&spec, params)?;
    let noise_cov = &sigma * sigma.transpose();

    let mut m_const = DVector::zeros(p);
    let bottom = spec.bottom();
    for site in 0..n_sites {
        let r = spec.index(bottom, site);
        m_const[r] = rows[r] * params.level_at(site);
    }
    let mut m_forcing = DVector::zeros(p);
    if let Some(layer) = spec.forcing_layer {
        for site in 0..n_sites {
            let r = spec.index(layer, site);
            m_forcing[r] = rows[r] * params.beta;
        }
    }

    let eigen = eigensystem(&pull)?;
    let rotated_noise = {
        let mut m = &eigen.left * &noise_cov * eigen.left.transpose();
        symmetrize(&mut m);
        m
    };
    let rotated_const = &eigen.left * &m_const;
    let rotated_forcing = &eigen.left * &m_forcing;
    let stationary_cov = lyapunov_upper(&pull, &noise_cov);

    Ok(SystemMatrices {
        spec,
        pull,
        sigma,
        noise_cov,
        m_const,
        m_forcing,
        eigen,
        jittered,
        rotated_noise,
        rotated_const,
        rotated_forcing,
        stationary_cov,
    })
}

fn diffusion_matrix(spec: &ModelSpec, params: &ParamVector) -> Result<DMatrix<f64>> {
    let p = spec.state_dim();
    let s = spec.n_sites;
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    for layer in 0..spec.n_layers {
        if spec.deterministic[layer] {
            continue;
        }
        let sds: Vec<f64> = (0..s).map(|j| params.diffusion(layer, j)).collect();
        let mut block = match spec.correlation[layer] {
            Correlation::None => DMatrix::from_diagonal(&DVector::from_vec(sds.clone())),
            Correlation::Perfect => DMatrix::from_column_slice(s, 1, &sds),
            Correlation::Intermediate => {
                let rho = params.correlation(spec, layer);
                let corr = DMatrix::from_fn(s, s, |i, j| if i == j { 1.0 } else { rho });
                let chol = corr.cholesky().ok_or_else(|| {
                    Error::DomainError(format!(
                        "correlation {rho} of layer {} gives an indefinite correlation matrix for {s} sites",
                        layer + 1
                    ))
                })?;
                DMatrix::from_diagonal(&DVector::from_vec(sds.clone())) * chol.l()
            }
        };
        // embed the block's rows at the layer's position
        let mut full = DMatrix::zeros(p, block.ncols());
        full.rows_mut(spec.index(layer, 0), s).copy_from(&block);
        block = full;
        blocks.push(block);
    }
    let q: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut sigma = DMatrix::zeros(p, q);
    let mut col = 0;
    for b in blocks {
        let w = b.ncols();
        sigma.columns_mut(col, w).copy_from(&b);
        col += w;
    }
    Ok(sigma)
}

/// Eigendecomposition of an upper-triangular matrix by back substitution.
pub fn eigensystem(a: &DMatrix<f64>) -> Result<Eigensystem> {
    let p = a.nrows();
    let values = a.diagonal();
    let mut right = DMatrix::<f64>::zeros(p, p);
    for k in 0..p {
        let lambda = values[k];
        right[(k, k)] = 1.0;
        for m in (0..k).rev() {
            let mut num = 0.0;
            for n in (m + 1)..=k {
                num += a[(m, n)] * right[(n, k)];
            }
            if num == 0.0 {
                continue;
            }
            let den = a[(m, m)] - lambda;
            if close(a[(m, m)], lambda) {
                return Err(Error::DegenerateEigensystem {
                    a: -a[(m, m)],
                    b: -lambda,
                    gap: DEGENERACY_GAP,
                });
            }
            right[(m, k)] = -num / den;
        }
    }
    let left = right
        .clone()
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::NonFiniteResult("eigenvector inversion".into()))?;
    if !all_finite(&right) || !all_finite(&left) {
        return Err(Error::NonFiniteResult("eigenvectors".into()));
    }
    let row_norm = |m: &DMatrix<f64>| {
        m.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let condition = row_norm(&right) * row_norm(&left);
    Ok(Eigensystem {
        values,
        right,
        left,
        condition,
    })
}

impl SystemMatrices {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.pull.nrows()
    }

    /// True when transitions are evaluated in the eigenbasis.
    pub fn uses_eigenbasis(&self) -> bool {
        self.eigen.condition <= EIGEN_CONDITION_LIMIT
    }

    fn check_stationary(&self) -> Result<()> {
        match self.eigen.values.iter().copied().find(|&v| !(v < 0.0)) {
            Some(v) => Err(Error::NotStationary(v)),
            None => Ok(()),
        }
    }

    /// Transition matrix and accumulated noise covariance over a gap `dt ≥ 0`.
    pub fn transition(&self, dt: f64) -> Result<Transition> {
        let p = self.dim();
        if dt == 0.0 {
            return Ok(Transition {
                phi: DMatrix::identity(p, p),
                cov: DMatrix::zeros(p, p),
            });
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::DomainError(format!("time gap must be non-negative, got {dt}")));
        }
        let (phi, mut cov) = if self.uses_eigenbasis() {
            let lam = &self.eigen.values;
            let decay = lam.map(|l| (l * dt).exp());
            let mut scaled_left = self.eigen.left.clone();
            for (k, mut row) in scaled_left.row_iter_mut().enumerate() {
                row *= decay[k];
            }
            let phi = &self.eigen.right * scaled_left;
            let inner = DMatrix::from_fn(p, p, |k, l| {
                self.rotated_noise[(k, l)] * dt * phi1((lam[k] + lam[l]) * dt)
            });
            let cov = &self.eigen.right * inner * self.eigen.right.transpose();
            (phi, cov)
        } else {
            self.check_stationary()?;
            let phi = (&self.pull * dt).exp();
            let cov = &self.stationary_cov - &phi * &self.stationary_cov * phi.transpose();
            (phi, cov)
        };
        symmetrize(&mut cov);
        if !all_finite(&phi) || !all_finite(&cov) {
            return Err(Error::NonFiniteResult("transition moments".into()));
        }
        Ok(Transition { phi, cov })
    }

    /// Deterministic part `∫_{t0}^{t1} e^{A(t1−u)} m(u) du` of the mean update.
    pub fn drift(&self, t0: f64, t1: f64, forcing: Option<&ForcingSeries>) -> Result<DVector<f64>> {
        let p = self.dim();
        let dt = t1 - t0;
        if dt == 0.0 {
            return Ok(DVector::zeros(p));
        }
        let forcing = forcing.filter(|_| self.spec.forcing_layer.is_some());
        let out = if self.uses_eigenbasis() {
            let lam = &self.eigen.values;
            let rotated = DVector::from_fn(p, |k, _| {
                let mut v = self.rotated_const[k] * dt * phi1(lam[k] * dt);
                if let Some(f) = forcing {
                    if self.rotated_forcing[k] != 0.0 {
                        v += self.rotated_forcing[k] * f.exp_weighted_integral(lam[k], t0, t1);
                    }
                }
                v
            });
            &self.eigen.right * rotated
        } else {
            self.drift_augmented(t0, t1, forcing)
        };
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::NonFiniteResult("drift integral".into()))
        }
    }

    /// Drift through the exponential of the augmented generator
    /// `[[A, f, m], [0, 0, slope], [0, 0, 0]]`, one linear forcing piece at a time.
    fn drift_augmented(&self, t0: f64, t1: f64, forcing: Option<&ForcingSeries>) -> DVector<f64> {
        let p = self.dim();
        let pieces: Vec<(f64, f64, f64)> = match forcing {
            Some(f) => f
                .segments(t0, t1)
                .iter()
                .map(|s| {
                    let h = s.end - s.start;
                    (h, s.value_start, (s.value_end - s.value_start) / h)
                })
                .collect(),
            None => vec![(t1 - t0, 0.0, 0.0)],
        };
        let mut x = DVector::zeros(p);
        for (h, value, slope) in pieces {
            let mut gen = DMatrix::zeros(p + 2, p + 2);
            gen.view_mut((0, 0), (p, p)).copy_from(&self.pull);
            gen.view_mut((0, p), (p, 1)).copy_from(&self.m_forcing);
            gen.view_mut((0, p + 1), (p, 1)).copy_from(&self.m_const);
            gen[(p, p + 1)] = slope;
            let e = (gen * h).exp();
            let mut y = DVector::zeros(p + 2);
            y.rows_mut(0, p).copy_from(&x);
            y[p] = value;
            y[p + 1] = 1.0;
            x = (e * y).rows(0, p).into_owned();
        }
        x
    }

    /// Mean and covariance of `X(t1)` given `X(t0) ~ N(mean0, cov0)`.
    pub fn transition_moments(
        &self,
        mean0: &DVector<f64>,
        cov0: &DMatrix<f64>,
        t0: f64,
        t1: f64,
        forcing: Option<&ForcingSeries>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if t1 < t0 {
            return Err(Error::DomainError(format!("t1 = {t1} precedes t0 = {t0}")));
        }
        if t1 == t0 {
            return Ok((mean0.clone(), cov0.clone()));
        }
        let tr = self.transition(t1 - t0)?;
        let mean = &tr.phi * mean0 + self.drift(t0, t1, forcing)?;
        let mut cov = &tr.phi * cov0 * tr.phi.transpose() + tr.cov;
        symmetrize(&mut cov);
        if !mean.iter().all(|v| v.is_finite()) || !all_finite(&cov) {
            return Err(Error::NonFiniteResult("transition moments".into()));
        }
        Ok((mean, cov))
    }

    /// Stationary mean and covariance of the unforced system.
    pub fn stationary_moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_stationary()?;
        let p = self.dim();
        let mean = self
            .pull
            .clone()
            .solve_upper_triangular(&(-&self.m_const))
            .ok_or_else(|| Error::NonFiniteResult("stationary mean".into()))?;
        let cov = if self.uses_eigenbasis() {
            let lam = &self.eigen.values;
            let inner =
                DMatrix::from_fn(p, p, |k, l| -self.rotated_noise[(k, l)] / (lam[k] + lam[l]));
            let mut c = &self.eigen.right * inner * self.eigen.right.transpose();
            symmetrize(&mut c);
            c
        } else {
            self.stationary_cov.clone()
        };
        if !mean.iter().all(|v| v.is_finite()) || !all_finite(&cov) {
            return Err(Error::NonFiniteResult("stationary moments".into()));
        }
        Ok((mean, cov))
    }

    /// Stationary covariance from the Lyapunov equation `A P + P Aᵀ + ΣΣᵀ = 0`,
    /// computed without the eigenbasis.
    pub fn stationary_cov_lyapunov(&self) -> &DMatrix<f64> {
        &self.stationary_cov
    }

    /// Stationary cross-covariance `cov(X(t), X(t + lag))` of the unforced system.
    pub fn stationary_cross_cov(&self, lag: f64) -> Result<DMatrix<f64>> {
        let (_, cov) = self.stationary_moments()?;
        let tr = self.transition(lag)?;
        Ok(cov * tr.phi.transpose())
    }
}
