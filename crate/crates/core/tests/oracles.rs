mod common;

use layered_sde::kalman::{log_likelihood, smooth};
use layered_sde::system::build_system;
use layered_sde::{Dataset, ForcingSeries, ModelSpec, ParamVector};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(name: &str) -> ModelSpec {
    name.parse::<ModelSpec>().unwrap().normalized().unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Forcing coefficients per state: `α_l β` on every site of the forced layer.
fn forcing_coefficients(s: &ModelSpec, p: &ParamVector) -> DVector<f64> {
    let mut c = DVector::zeros(s.state_dim());
    if let Some(l) = s.forcing_layer {
        for site in 0..s.n_sites {
            c[s.index(l, site)] = p.pull(l, site) * p.beta;
        }
    }
    c
}

/// Mean path of `dμ = (Aμ + m + c T(t)) dt` by classical Runge–Kutta.
fn rk4_mean(sde: &common::Sde, c: &DVector<f64>, f: &ForcingSeries, mu0: DVector<f64>, t0: f64, t1: f64) -> DVector<f64> {
    let steps = (((t1 - t0) / 1e-3).ceil() as usize).max(1);
    let h = (t1 - t0) / steps as f64;
    let rhs = |t: f64, x: &DVector<f64>| &sde.a * x + &sde.m + c * f.value_at(t);
    let mut x = mu0;
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = rhs(t, &x);
        let k2 = rhs(t + h / 2.0, &(&x + &k1 * (h / 2.0)));
        let k3 = rhs(t + h / 2.0, &(&x + &k2 * (h / 2.0)));
        let k4 = rhs(t + h, &(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

fn forcing() -> ForcingSeries {
    ForcingSeries::new(vec![-2.0, 0.5, 1.7, 4.0, 6.5], vec![0.0, 3.0, -1.0, 2.0, 2.5]).unwrap()
}

#[test]
fn forced_drift_matches_ode_solution() {
    let f = forcing();
    for name in ["L1:S1:forcing@1", "L2:S1:forcing@2", "L3:S2:corr3=int:forcing@2"] {
        let s = spec(name);
        let mut p = ParamVector::from_layers(&[4.0, 1.1, 0.3][..s.n_layers], &[0.3, 0.4, 0.5][..s.n_layers], 0.7)
            .with_beta(0.8);
        if s.n_layers == 3 {
            p = p.with_correlation(2, 0.4);
        }
        let sys = build_system(&s, &p).unwrap();
        let oracle = common::sde(&s, &p);
        let c = forcing_coefficients(&s, &p);
        for (t0, t1) in [(-3.0, -2.5), (-1.0, 2.0), (0.6, 0.61), (3.0, 9.0)] {
            let drift = sys.drift(t0, t1, Some(&f)).unwrap();
            let expect = rk4_mean(&oracle, &c, &f, DVector::zeros(s.state_dim()), t0, t1);
            for i in 0..drift.len() {
                assert!((drift[i] - expect[i]).abs() < 1e-9 * (1.0 + expect[i].abs()), "{name} [{t0},{t1}] {i}");
            }
        }
    }
}

#[test]
fn forced_likelihood_matches_joint_gaussian() {
    // states start from the unforced stationary law at the forcing start
    let f = forcing();
    let s = spec("L2:S2:regdiff@1:forcing@2");
    let p = ParamVector::from_layers(&[3.0, 0.4], &[0.5, 0.3], 1.2)
        .with_beta(-0.6)
        .with_regional_diffusions(0, vec![0.5, 0.2]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data = common::random_dataset(&mut rng, 2, 12);
    let sde = common::sde(&s, &p);
    let c = forcing_coefficients(&s, &p);
    let (_, cov) = common::joint_moments(&s, &p, &data);
    let mut t = f.start().min(data.first_time().unwrap());
    let mut mu = common::stationary_mean(&sde);
    let mean = DVector::from_iterator(
        data.len(),
        data.records().iter().map(|r| {
            mu = rk4_mean(&sde, &c, &f, mu.clone(), t, r.time);
            t = r.time;
            mu[r.site]
        }),
    );
    let y = DVector::from_iterator(data.len(), data.records().iter().map(|r| r.y));
    let oracle = common::gaussian_logpdf(&y, &mean, &cov);
    let ll = log_likelihood(&s, &p, &data, Some(&f)).unwrap();
    assert!(rel(ll, oracle) < 1e-7, "{ll} vs {oracle}");
}

#[test]
fn smoother_matches_gaussian_conditioning() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..15 {
        let (s, p) = common::random_fixture(&mut rng);
        let data = common::random_dataset(&mut rng, s.n_sites, 8);
        let mut queries: Vec<f64> = vec![-1.0, 11.5, rng.random_range(0.0..10.0)];
        queries.push(data.records()[0].time);
        let post = smooth(&s, &p, &data, None, &queries).unwrap();

        let sde = common::sde(&s, &p);
        let pst = common::lyapunov(&sde.a, &sde.q);
        let mu = common::stationary_mean(&sde);
        let (ymean, ycov) = common::joint_moments(&s, &p, &data);
        let y = DVector::from_iterator(data.len(), data.records().iter().map(|r| r.y));
        let yinv = ycov.clone().try_inverse().unwrap();
        for (k, &tq) in queries.iter().enumerate() {
            // cov(X(tq), y_i): stationary cross-covariance in either time order
            let cross = DMatrix::from_fn(s.state_dim(), data.len(), |a, i| {
                let r = &data.records()[i];
                let dt = r.time - tq;
                let c = if dt >= 0.0 {
                    &pst * (&sde.a * dt).exp().transpose()
                } else {
                    (&sde.a * -dt).exp() * &pst
                };
                c[(a, r.site)]
            });
            let m = &mu + &cross * &yinv * (&y - &ymean);
            let c = &pst - &cross * &yinv * cross.transpose();
            for a in 0..s.state_dim() {
                assert!((post.means[k][a] - m[a]).abs() < 1e-7 * (1.0 + m[a].abs()), "{s} mean t={tq}");
                for b in 0..s.state_dim() {
                    assert!((post.covs[k][(a, b)] - c[(a, b)]).abs() < 1e-7 * (1.0 + pst[(a, a)]), "{s} cov t={tq}");
                }
            }
        }
    }
}

#[test]
fn transition_matches_matrix_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let (s, p) = common::random_fixture(&mut rng);
        let sys = build_system(&s, &p).unwrap();
        let sde = common::sde(&s, &p);
        let pst = common::lyapunov(&sde.a, &sde.q);
        let dt = rng.random_range(0.01..5.0);
        let tr = sys.transition(dt).unwrap();
        let phi = (&sde.a * dt).exp();
        let cov = &pst - &phi * &pst * phi.transpose();
        assert!((&tr.phi - &phi).amax() < 1e-9 * (1.0 + phi.amax()), "{s}");
        assert!((&tr.cov - &cov).amax() < 1e-9 * (1.0 + pst.amax()), "{s}");
    }
}

#[test]
fn tied_pulls_are_continuous() {
    // equal pulls need the jitter; the oracle handles them directly
    let s = spec("L3:S1");
    let data: Dataset = Dataset::from_observations(
        1,
        (0..15).map(|i| (0, 0.4 * i as f64, (i as f64 * 0.7).sin(), 0.02)),
    )
    .unwrap();
    for (a, b, c) in [(2.0, 2.0, 0.5), (1.0, 0.5, 0.5), (0.8, 0.8, 0.8)] {
        let p = ParamVector::from_layers(&[a, b, c], &[0.4, 0.3, 0.2], 0.1);
        let ll = log_likelihood(&s, &p, &data, None).unwrap();
        let oracle = common::joint_log_likelihood(&s, &p, &data);
        assert!(rel(ll, oracle) < 1e-5, "{a} {b} {c}: {ll} vs {oracle}");
    }
}
