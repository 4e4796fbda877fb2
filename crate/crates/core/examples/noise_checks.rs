//! Checks of the properties the deviation bounds rest on: centered noise
//! intervals hold the most mass, the true model's fit error is
//! stochastically no worse than a fitted model's, and two models that both
//! fit a candidate within η are within 4η of each other.

use predev::estimation::{z_fit, Experiment, FitOptions};
use predev::models::{chain, simulate_dataset, NoiseDistribution, NoiseSpec};
use predev::ode::Tolerances;
use predev::validation::{check_fit_error_ordering, check_lemma1, check_proposition, grid, OrderingSpec};

fn main() -> predev::Result<()> {
    let xs = grid(0.0, 3.0, 0.1);
    let shifts = grid(-3.0, 3.0, 0.5);
    for (name, dist) in [("normal", NoiseDistribution::Normal), ("uniform", NoiseDistribution::Uniform)] {
        let r = check_lemma1(&dist, &xs, &shifts);
        println!("{name}: {} of {} interval pairs violate the centering property", r.violations.len(), r.checked);
    }

    let d = chain();
    let model = d.system.as_ref();
    let noise = NoiseSpec::normal(0.2).with_known_variance();
    let experiments =
        vec![Experiment::new(d.factors("x")?.clone()).measure(d.observable("x")?, vec![0.5, 1.0, 1.5, 2.0])];
    let spec = OrderingSpec {
        theta_true: d.default_theta.clone(),
        theta_star: Some(vec![1.1, 0.3]),
        noise: noise.clone(),
        experiments: experiments.clone(),
        replicates: 2,
        trials: 400,
        thresholds: vec![4.0, 8.0, 12.0, 16.0],
        fit: FitOptions::new(d.parameter_space.clone()),
    };
    let r = check_fit_error_ordering(model, &spec, 3)?;
    for (k, x) in r.thresholds.iter().enumerate() {
        println!("P(z > {x}): true {:.3}, fixed model {:.3}", r.exceed_true[k], r.exceed_star[k]);
    }

    let data = simulate_dataset(model, &d.default_theta, &experiments, &noise, 2, 5)?;
    let eta = z_fit(model, &d.default_theta, &experiments, &data, &Tolerances::fitting())? + 8.0;
    let r = check_proposition(model, &experiments[0], &data, &d.default_theta, eta, 500, 9)?;
    println!(
        "closeness bound: {} triangle and {} 4-eta violations in {} pairs, largest z_dev / 4 eta = {:.3}",
        r.triangle_violations,
        r.bound_violations,
        r.samples.len(),
        r.max_ratio
    );
    Ok(())
}
