//! Independent oracles shared by the integration suites. Nothing here calls
//! into the library's system construction or filter.

#![allow(dead_code)]

use layered_sde::spec::{Correlation, ModelSpec, RegionalKind, RANDOM_WALK_PULL};
use layered_sde::{Dataset, ParamVector};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Drift matrix, noise covariance and constant drift of `dX = (A X + m) dt + dW`,
/// built directly from the layer description.
pub struct Sde {
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub m: DVector<f64>,
}

pub fn sde(spec: &ModelSpec, p: &ParamVector) -> Sde {
    let (l, s) = (spec.n_layers, spec.n_sites);
    let n = l * s;
    let idx = |layer: usize, site: usize| layer * s + site;
    let pick = |v: &Vec<f64>, site: usize| if v.len() == 1 { v[0] } else { v[site] };
    let mut a = DMatrix::zeros(n, n);
    let mut q = DMatrix::zeros(n, n);
    let mut m = DVector::zeros(n);
    for layer in 0..l {
        for site in 0..s {
            let alpha = pick(&p.pulls[layer], site);
            let i = idx(layer, site);
            a[(i, i)] = -alpha;
            if layer + 1 < l {
                a[(i, idx(layer + 1, site))] = alpha;
            } else {
                m[i] = alpha * pick(&p.level, site);
            }
        }
        let rho = match spec.correlation[layer] {
            Correlation::None => 0.0,
            Correlation::Perfect => 1.0,
            Correlation::Intermediate => p.correlations[layer],
        };
        for s1 in 0..s {
            for s2 in 0..s {
                let sd = |site| {
                    if spec.deterministic[layer] {
                        0.0
                    } else {
                        pick(&p.diffusions[layer], site)
                    }
                };
                let r = if s1 == s2 { 1.0 } else { rho };
                q[(idx(layer, s1), idx(layer, s2))] = r * sd(s1) * sd(s2);
            }
        }
    }
    Sde { a, q, m }
}

/// Stationary covariance from the vectorised Lyapunov equation
/// `(I ⊗ A + A ⊗ I) vec P = −vec Q`.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let k = id.kronecker(a) + a.kronecker(&id);
    let vq = DVector::from_column_slice(q.as_slice());
    let vp = k.lu().solve(&(-vq)).expect("stable drift");
    let p = DMatrix::from_column_slice(n, n, vp.as_slice());
    (&p + p.transpose()) * 0.5
}

pub fn stationary_mean(sde: &Sde) -> DVector<f64> {
    sde.a.clone().lu().solve(&(-&sde.m)).expect("stable drift")
}

/// Log density of `y ~ N(mean, cov)` by Cholesky.
pub fn gaussian_logpdf(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let chol = cov.clone().cholesky().expect("positive definite");
    let r = y - mean;
    let z = chol.l().solve_lower_triangular(&r).unwrap();
    let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet + z.dot(&z))
}

/// Joint law of all observations of a stationary unforced model.
pub fn joint_moments(spec: &ModelSpec, p: &ParamVector, data: &Dataset) -> (DVector<f64>, DMatrix<f64>) {
    let sys = sde(spec, p);
    let pst = lyapunov(&sys.a, &sys.q);
    let mu = stationary_mean(&sys);
    let recs = data.records();
    let n = recs.len();
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let (ri, rj) = (&recs[i], &recs[j]);
            let phi = (&sys.a * (rj.time - ri.time)).exp();
            // cov(X(t_i), X(t_j)) = P Φ(t_j − t_i)ᵀ for t_j ≥ t_i
            let c = &pst * phi.transpose();
            let v = c[(ri.site, rj.site)];
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
        cov[(i, i)] += recs[i].noise_var();
    }
    let mean = DVector::from_fn(n, |i, _| mu[recs[i].site]);
    (mean, cov)
}

/// Joint-Gaussian log-likelihood of `data`.
pub fn joint_log_likelihood(spec: &ModelSpec, p: &ParamVector, data: &Dataset) -> f64 {
    let (mean, cov) = joint_moments(spec, p, data);
    let y = DVector::from_iterator(data.len(), data.records().iter().map(|r| r.y));
    gaussian_logpdf(&y, &mean, &cov)
}

/// Pulls decreasing down the layers with ratio at least 1.5, so no two
/// coupled pulls are close.
fn spaced_pulls<R: Rng>(rng: &mut R, count: usize) -> Vec<f64> {
    let mut a = rng.random_range(0.5..20.0);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(a);
        a /= rng.random_range(1.5..4.0);
    }
    out
}

/// A random structure with at most three layers and two sites, and
/// parameters for it.
pub fn random_fixture<R: Rng>(rng: &mut R) -> (ModelSpec, ParamVector) {
    let n_layers = rng.random_range(1..=3);
    let n_sites = rng.random_range(1..=2);
    let mut spec = ModelSpec::new(n_layers, n_sites);
    if n_sites == 2 && rng.random_bool(0.5) {
        let kind = [RegionalKind::Level, RegionalKind::Pull, RegionalKind::Diffusion][rng.random_range(0..3)];
        let layer = if kind == RegionalKind::Level { n_layers - 1 } else { rng.random_range(0..n_layers) };
        spec = spec.with_regional(kind, layer);
    }
    for layer in 0..n_layers - 1 {
        if rng.random_bool(0.25) {
            spec = spec.with_deterministic(layer);
        }
    }
    if rng.random_bool(0.25) {
        spec = spec.with_random_walk();
    }
    if n_sites == 2 {
        for layer in 0..n_layers {
            let c = [Correlation::None, Correlation::Intermediate, Correlation::Perfect][rng.random_range(0..3)];
            spec = spec.with_correlation(layer, c);
        }
    }
    let spec = spec.normalized().expect("valid random spec");

    // per-site chains of pulls, bottom fixed for a random walk
    let chains: Vec<Vec<f64>> = (0..n_sites).map(|_| spaced_pulls(rng, n_layers)).collect();
    let mut pulls = Vec::new();
    let mut diffusions = Vec::new();
    for layer in 0..n_layers {
        let mut pv: Vec<f64> = if spec.regional_pull_layer() == Some(layer) {
            chains.iter().map(|c| c[layer]).collect()
        } else {
            vec![chains[0][layer]]
        };
        if spec.pull_fixed(layer) {
            pv = vec![RANDOM_WALK_PULL; pv.len()];
        }
        pulls.push(pv);
        let nd = if spec.regional_diffusion_layer() == Some(layer) { n_sites } else { 1 };
        diffusions.push(
            (0..nd)
                .map(|_| if spec.deterministic[layer] { 0.0 } else { rng.random_range(0.1..1.0) })
                .collect(),
        );
    }
    // a regional pull layer must stay separated from its neighbours at every site
    if let Some(rl) = spec.regional_pull_layer() {
        for site in 0..n_sites {
            let own = pulls[rl][site];
            for other in 0..n_layers {
                if other != rl && pulls[other].len() == 1 && ((pulls[other][0] - own).abs() < 0.3 * own) {
                    pulls[rl][site] = own * if other < rl { 0.5 } else { 2.0 };
                }
            }
        }
    }
    let n_level = if spec.regional_level() { n_sites } else { 1 };
    let level = (0..n_level).map(|_| rng.random_range(-2.0..2.0)).collect();
    let correlations = (0..n_layers).map(|_| rng.random_range(-0.5..0.9)).collect();
    let params = ParamVector {
        pulls,
        diffusions,
        correlations,
        level,
        beta: 0.0,
    };
    (spec, params)
}

/// Up to `max_obs` observations at random sites and times, with some ties.
pub fn random_dataset<R: Rng>(rng: &mut R, n_sites: usize, max_obs: usize) -> Dataset {
    let n = rng.random_range(1..=max_obs);
    let mut times: Vec<f64> = Vec::new();
    let obs: Vec<(usize, f64, f64, f64)> = (0..n)
        .map(|_| {
            let t = if !times.is_empty() && rng.random_bool(0.2) {
                times[rng.random_range(0..times.len())]
            } else {
                rng.random_range(0.0..10.0)
            };
            times.push(t);
            (rng.random_range(0..n_sites), t, rng.random_range(-2.0..3.0), rng.random_range(0.01..0.1))
        })
        .collect();
    Dataset::from_observations(n_sites, obs).unwrap()
}

/// Closed-form stationary autocovariance of the top of a two-layer chain,
/// written out from the frequency-domain representation.
pub fn two_layer_acf(a1: f64, a2: f64, s1: f64, s2: f64, lag: f64) -> f64 {
    let top = s1 * s1 / (2.0 * a1) * (-a1 * lag).exp();
    let w = s2 * s2 * a1 * a1 / (a1 * a1 - a2 * a2);
    top + w * ((-a2 * lag).exp() / (2.0 * a2) - (-a1 * lag).exp() / (2.0 * a1))
}

/// Asymptotic Kolmogorov p-value for the one-sample KS statistic `d` on `n` points.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// KS statistic of `xs` against a normal law.
pub fn ks_normal(xs: &[f64], mean: f64, sd: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let nd = Normal::new(mean, sd).unwrap();
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = nd.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
