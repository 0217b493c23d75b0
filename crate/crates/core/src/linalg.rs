//! Small dense linear-algebra helpers shared by the filter, smoother and
//! simulator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// `B` with `B Bᵀ = m` for a symmetric positive semidefinite `m`; negative
/// eigenvalues from rounding are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = m.clone().symmetric_eigen();
    let mut b = eig.eigenvectors.clone();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for i in 0..n {
            b[(i, k)] *= s;
        }
    }
    b
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix, discarding
/// eigenvalues below `rel_tol` times the largest one.
pub fn pinv_sym(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let cut = rel_tol * max;
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cut && lambda > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / lambda;
        }
    }
    out
}

/// Ratio of the smallest to the largest-magnitude eigenvalue.
pub fn min_eig_ratio(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

/// Solves `A P + P Aᵀ + Q = 0` for upper-triangular `A` by substitution.
///
/// Requires `A_ii + A_jj != 0` for all `i, j`, which holds whenever every
/// diagonal entry is negative.
pub fn lyapunov_upper(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut p = DMatrix::<f64>::zeros(n, n);
    for i in (0..n).rev() {
        for j in (0..n).rev() {
            let mut rhs = -q[(i, j)];
            for k in (i + 1)..n {
                rhs -= a[(i, k)] * p[(k, j)];
            }
            for k in (j + 1)..n {
                rhs -= p[(i, k)] * a[(j, k)];
            }
            p[(i, j)] = rhs / (a[(i, i)] + a[(j, j)]);
        }
    }
    symmetrize(&mut p);
    p
}

/// Log density of `N(0, cov)` at `resid`, via Cholesky.
pub fn gaussian_logpdf(resid: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let k = resid.len();
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NonFiniteResult("innovation covariance is not positive definite".into()))?;
    let l = chol.l();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let z = l
        .solve_lower_triangular(resid)
        .ok_or_else(|| Error::NonFiniteResult("triangular solve failed".into()))?;
    let out = -0.5 * (k as f64 * LN_2PI + log_det + z.norm_squared());
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::NonFiniteResult("Gaussian log density".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyapunov_solution_satisfies_equation() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 2.0, 0.0, 0.0, -0.5, 0.5, 0.0, 0.0, -1.5]);
        let q = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 0.5, 0.1, 0.0, 0.1, 2.0]);
        let p = lyapunov_upper(&a, &q);
        let resid = &a * &p + &p * a.transpose() + &q;
        assert!(resid.amax() < 1e-12);
    }

    #[test]
    fn psd_sqrt_reconstructs() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 0.5]);
        let b = psd_sqrt(&m);
        assert!((&b * b.transpose() - &m).amax() < 1e-12);
    }

    #[test]
    fn pinv_of_singular_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = pinv_sym(&m, 1e-12);
        assert!((&m * &p * &m - &m).amax() < 1e-12);
    }

    #[test]
    fn logpdf_univariate() {
        let r = DVector::from_vec(vec![0.0]);
        let c = DMatrix::from_element(1, 1, 2.0);
        let v = gaussian_logpdf(&r, &c).unwrap();
        assert!((v + 0.5 * (4.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }
}
