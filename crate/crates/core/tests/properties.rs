use proptest::prelude::*;

use predev::design::{eta_default, EtaMode, EtaRule};
use predev::deviation::{solve_prediction_deviation, z_dev, DeviationOptions, PredictionProblem};
use predev::estimation::{z_fit, Experiment, FitOptions};
use predev::models::{chain, simulate_dataset, NoiseDistribution, NoiseSpec};
use predev::ode::Tolerances;
use predev::optim::{ParamRange, ParamSpace};
use predev::validation::check_lemma1;

fn chain_setup(
) -> (predev::models::ModelDescriptor, Vec<Experiment>, Vec<PredictionProblem>, predev::estimation::Dataset) {
    let d = chain();
    let base = d.factors("x").unwrap().clone();
    let experiments = vec![Experiment::new(base.clone()).measure(d.observable("x").unwrap(), vec![0.5, 1.0, 2.0])];
    let problems = vec![PredictionProblem::new(
        Experiment::new(base)
            .measure(d.observable("y").unwrap(), vec![1.0, 2.0, 4.0])
            .measure(d.observable("x").unwrap(), vec![3.0]),
    )
    .with_scale("y", 0.3)
    .with_scale("x", 0.1)];
    let data = simulate_dataset(
        d.system.as_ref(),
        &d.default_theta,
        &experiments,
        &NoiseSpec::normal(0.1).with_known_variance(),
        2,
        5,
    )
    .unwrap();
    (d, experiments, problems, data)
}

fn theta() -> impl Strategy<Value = Vec<f64>> {
    (0.1f64..5.0, 0.05f64..2.0).prop_map(|(a, b)| vec![a, b])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn root_deviation_is_a_pseudometric(a in theta(), b in theta(), c in theta()) {
        let (d, _, problems, data) = chain_setup();
        let m = d.system.as_ref();
        let tol = Tolerances::fitting();
        let dev = |p: &[f64], q: &[f64]| z_dev(m, p, q, &problems, Some(&data), &tol).unwrap();
        prop_assert_eq!(dev(&a, &a), 0.0);
        prop_assert!((dev(&a, &b) - dev(&b, &a)).abs() <= 1e-12 * dev(&a, &b).max(1.0));
        let (ab, bc, ac) = (dev(&a, &b).sqrt(), dev(&b, &c).sqrt(), dev(&a, &c).sqrt());
        prop_assert!(ac <= ab + bc + 1e-8, "{} > {} + {}", ac, ab, bc);
    }

    #[test]
    fn fit_error_is_non_negative(t in theta()) {
        let (d, experiments, _, data) = chain_setup();
        let z = z_fit(d.system.as_ref(), &t, &experiments, &data, &Tolerances::fitting()).unwrap();
        prop_assert!(z >= 0.0);
    }

    #[test]
    fn ratio_eta_depends_only_on_the_count_ratio(z in 0.5f64..500.0, a in 1usize..50, b in 1usize..50, k in 1usize..5) {
        let e1 = eta_default(z, a, b).unwrap();
        let e2 = eta_default(z, k * a, k * b).unwrap();
        prop_assert!((e1 - e2).abs() <= 1e-12 * e1);
        let four = EtaRule { multiplier: 4.0, ..EtaRule::default() };
        prop_assert!((four.resolve(z, a, b).unwrap() - 4.0 * e1).abs() <= 1e-12 * e1);
        let fixed = EtaRule { mode: EtaMode::Fixed, value: Some(z), ..EtaRule::default() };
        prop_assert_eq!(fixed.resolve(1.0, a, b).unwrap(), z);
    }

    #[test]
    fn parameter_transform_round_trips(t in theta(), lin in -3.0f64..3.0) {
        let space = ParamSpace::new(vec![ParamRange::log(0.01, 10.0), ParamRange::log(0.01, 10.0), ParamRange::linear(-5.0, 5.0)]).unwrap();
        let theta = vec![t[0], t[1], lin];
        let back = space.to_theta(&space.to_internal(&theta).unwrap());
        for (x, y) in theta.iter().zip(&back) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn symmetric_unimodal_noise_favours_the_centered_interval(x in 0.0f64..3.0, a in -3.0f64..3.0) {
        for dist in [NoiseDistribution::Normal, NoiseDistribution::Uniform] {
            let report = check_lemma1(&dist, &[x], &[a]);
            prop_assert!(report.passed(), "{:?}", report.violations);
        }
    }
}

#[test]
fn larger_threshold_never_shrinks_the_deviation() {
    let (d, experiments, problems, data) = chain_setup();
    let m = d.system.as_ref();
    let best = predev::estimation::fit(m, &experiments, &data, &FitOptions::new(d.parameter_space.clone()), 3).unwrap();
    let mut opts = DeviationOptions::new(d.parameter_space.clone());
    opts.restarts = 4;
    let tight =
        solve_prediction_deviation(m, &experiments, &data, &problems, &best.theta_star, best.z_star + 2.0, &opts, 7)
            .unwrap();
    let loose =
        solve_prediction_deviation(m, &experiments, &data, &problems, &best.theta_star, best.z_star + 6.0, &opts, 7)
            .unwrap();
    assert!(loose.value >= tight.value * (1.0 - 1e-6), "{} < {}", loose.value, tight.value);
    for r in [&tight, &loose] {
        for z in r.fit_errors {
            assert!(z <= r.z_upper * (1.0 + 1e-6));
        }
    }
}
