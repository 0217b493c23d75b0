mod common;

use layered_sde::kalman::{filter_at, log_likelihood, smooth};
use layered_sde::model_space::{from_unconstrained, log_prior, to_unconstrained, ParamLayout, PriorSpec};
use layered_sde::posterior::mixture_quantile;
use layered_sde::system::{build_system, build_system_jittered};
use layered_sde::{Dataset, ModelSpec, ParamVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture(seed: u64) -> (ModelSpec, ParamVector) {
    common::random_fixture(&mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unconstrained_round_trip(seed in any::<u64>()) {
        let (s, p) = fixture(seed);
        let z = to_unconstrained(&s, &p).unwrap();
        prop_assert_eq!(z.len(), ParamLayout::new(&s).unwrap().dim());
        let back = from_unconstrained(&s, &z).unwrap();
        let z2 = to_unconstrained(&s, &back).unwrap();
        for (a, b) in z.iter().zip(&z2) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn spec_names_round_trip(seed in any::<u64>()) {
        let (s, _) = fixture(seed);
        let again: ModelSpec = s.name().parse().unwrap();
        prop_assert_eq!(again.normalized().unwrap(), s);
    }

    #[test]
    fn transitions_compose(seed in any::<u64>(), s1 in 0.01f64..3.0, s2 in 0.01f64..3.0) {
        let (s, p) = fixture(seed);
        let sys = build_system(&s, &p).unwrap();
        let (a, b, ab) = (sys.transition(s1).unwrap(), sys.transition(s2).unwrap(), sys.transition(s1 + s2).unwrap());
        let phi = &b.phi * &a.phi;
        prop_assert!((&ab.phi - &phi).amax() < 1e-9 * (1.0 + phi.amax()));
        let cov = &b.phi * &a.cov * b.phi.transpose() + &b.cov;
        prop_assert!((&ab.cov - &cov).amax() < 1e-9 * (1.0 + cov.amax()));
    }

    #[test]
    fn stationary_covariance_is_psd(seed in any::<u64>()) {
        let (s, p) = fixture(seed);
        let (_, cov) = build_system(&s, &p).unwrap().stationary_moments().unwrap();
        let eig = cov.clone().symmetric_eigen();
        let top = eig.eigenvalues.amax();
        prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10 * top));
        prop_assert!((&cov - cov.transpose()).amax() <= 1e-12 * top);
    }

    #[test]
    fn site_relabelling_leaves_likelihood(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = "L2:S2:corr2=int".parse::<ModelSpec>().unwrap().normalized().unwrap();
        let p = ParamVector::from_layers(&[3.0, 0.5], &[0.4, 0.3], 0.2).with_correlation(1, 0.5);
        let data = common::random_dataset(&mut rng, 2, 10);
        let swapped = Dataset::from_observations(
            2,
            data.records().iter().map(|r| (1 - r.site, r.time, r.y, r.noise_var())),
        ).unwrap();
        let a = log_likelihood(&s, &p, &data, None).unwrap();
        let b = log_likelihood(&s, &p, &swapped, None).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn smoother_agrees_with_filter_at_last_observation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, p) = common::random_fixture(&mut rng);
        let data = common::random_dataset(&mut rng, s.n_sites, 10);
        let last = data.last_time().unwrap();
        let sys = build_system(&s, &p).unwrap();
        let f = filter_at(&sys, &data, None, &[last]).unwrap();
        let sm = smooth(&s, &p, &data, None, &[last]).unwrap();
        prop_assert!((&f.means[0] - &sm.means[0]).amax() < 1e-9 * (1.0 + f.means[0].amax()));
        prop_assert!((&f.covs[0] - &sm.covs[0]).amax() < 1e-9 * (1.0 + f.covs[0].amax()));
    }

    #[test]
    fn jitter_is_continuous(a in 0.2f64..10.0, rel_gap in 1e-12f64..1e-9) {
        let s = "L2:S1".parse::<ModelSpec>().unwrap().normalized().unwrap();
        let data = Dataset::from_observations(1, (0..8).map(|i| (0, 0.3 * i as f64, 0.1 * i as f64, 0.05))).unwrap();
        let near = ParamVector::from_layers(&[a * (1.0 + rel_gap), a], &[0.5, 0.4], 0.0);
        let apart = ParamVector::from_layers(&[a * (1.0 + 1e-4), a], &[0.5, 0.4], 0.0);
        prop_assert!(build_system_jittered(&s, &near).is_ok());
        let l1 = log_likelihood(&s, &near, &data, None).unwrap();
        let l2 = log_likelihood(&s, &apart, &data, None).unwrap();
        prop_assert!((l1 - l2).abs() < 1e-3 * (1.0 + l2.abs()));
    }

    #[test]
    fn prior_draws_have_finite_density(seed in any::<u64>(), ordered in any::<bool>()) {
        let (s, _) = fixture(seed);
        let prior = PriorSpec { pull_ordering: ordered, ..PriorSpec::default() };
        let layout = ParamLayout::new(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let p = prior.sample_params(&layout, &mut rng).unwrap();
        prop_assert!(log_prior(&s, &p, &prior).unwrap().is_finite());
    }

    #[test]
    fn mixture_quantiles_are_bracketed(means in prop::collection::vec(-5.0f64..5.0, 1..6), sd in 0.1f64..2.0) {
        let sds = vec![sd; means.len()];
        let lo = mixture_quantile(&means, &sds, 0.025);
        let mid = mixture_quantile(&means, &sds, 0.5);
        let hi = mixture_quantile(&means, &sds, 0.975);
        prop_assert!(lo < mid && mid < hi);
        let min = means.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo >= min - 1.96 * sd - 1e-6 && hi <= max + 1.96 * sd + 1e-6);
    }
}
