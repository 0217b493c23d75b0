//! Reordering pulls so they decrease from the top layer downwards.
//!
//! For a single-site chain the spectral density of the top layer is
//! `N(x) / Π_k (x + α_k²)` with
//! `N(x) = Σ_i σ_i² Π_{k<i} α_k² Π_{k>i} (x + α_k²)`. The denominator only
//! depends on the set of pulls, so any permutation of the pulls that keeps
//! `N` fixed is observationally equivalent. The same holds per site for a
//! multi-site model with global parameters and independent sites.

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::spec::{Correlation, ModelSpec};

/// Observationally equivalent parameters with pulls ordered
/// `α_top ≥ … ≥ α_bottom`.
///
/// Not applicable to regional pulls or diffusions, random-walk bottoms,
/// forcing above the bottom layer or correlated layers, nor when the
/// reordered diffusions would contradict the deterministic flags.
pub fn canonicalize_pulls(spec: &ModelSpec, params: &ParamVector) -> Result<ParamVector> {
    let spec = spec.normalized()?;
    params.check(&spec)?;
    let l = spec.n_layers;
    let a: Vec<f64> = (0..l).map(|i| params.pull(i, 0)).collect();
    if a.windows(2).all(|w| w[0] >= w[1]) {
        return Ok(params.clone());
    }
    if spec.regional_pull_layer().is_some() {
        return Err(Error::NotApplicable(
            "regional pulls cannot be ordered for all sites at once".into(),
        ));
    }
    if spec.regional_diffusion_layer().is_some() {
        return Err(Error::NotApplicable("regional diffusions".into()));
    }
    if spec.random_walk_bottom {
        return Err(Error::NotApplicable("the random-walk pull is fixed".into()));
    }
    if matches!(spec.forcing_layer, Some(f) if f != spec.bottom()) {
        return Err(Error::NotApplicable("forcing enters above the bottom layer".into()));
    }
    if spec.correlation.iter().any(|&c| c != Correlation::None) {
        return Err(Error::NotApplicable("correlated layers".into()));
    }

    let mut b = a.clone();
    b.sort_by(|x, y| y.total_cmp(x));
    for w in b.windows(2) {
        if (w[0] - w[1]).abs() <= 1e-12 * w[0] {
            return Err(Error::NotApplicable("tied pulls".into()));
        }
    }
    let s2: Vec<f64> = (0..l).map(|i| params.diffusion(i, 0).powi(2)).collect();
    let numerator = |x: f64| -> f64 {
        (0..l)
            .map(|i| {
                let above: f64 = (0..i).map(|k| a[k] * a[k]).product();
                let below: f64 = (i + 1..l).map(|k| x + a[k] * a[k]).product();
                s2[i] * above * below
            })
            .sum()
    };
    // term j of the reordered numerator evaluated at x = -b_i^2
    let coef = |j: usize, i: usize| -> f64 {
        let above: f64 = (0..j).map(|k| b[k] * b[k]).product();
        let below: f64 = (j + 1..l).map(|k| b[k] * b[k] - b[i] * b[i]).product();
        above * below
    };
    let mut t2 = vec![0.0; l];
    for i in (0..l).rev() {
        let known: f64 = (i + 1..l).map(|j| t2[j] * coef(j, i)).sum();
        t2[i] = (numerator(-b[i] * b[i]) - known) / coef(i, i);
    }

    let scale = s2.iter().cloned().fold(0.0, f64::max);
    let mut out = params.clone();
    for i in 0..l {
        let mut v = t2[i];
        if v.abs() <= 1e-9 * scale {
            v = 0.0;
        }
        if v < 0.0 {
            return Err(Error::NotApplicable(format!(
                "reordered diffusion of layer {} would be negative",
                i + 1
            )));
        }
        if (v == 0.0) != spec.deterministic[i] {
            return Err(Error::NotApplicable(format!(
                "reordered layer {} contradicts its deterministic flag",
                i + 1
            )));
        }
        out.pulls[i] = vec![b[i]];
        out.diffusions[i] = vec![v.sqrt()];
    }
    Ok(out)
}
