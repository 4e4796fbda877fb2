//! Prey-only data cannot identify the Lotka–Volterra parameters, yet the
//! predator trajectory is still pinned down: the deviation pair stays close.

use std::time::Instant;

use predev::deviation::{solve_prediction_deviation, DeviationOptions, PredictionProblem};
use predev::estimation::{bootstrap_interval, fit, BootstrapOptions, Experiment, FitOptions};
use predev::models::{lotka_volterra, simulate_dataset, NoiseSpec};

fn main() -> predev::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);
    let d = lotka_volterra();
    let model = d.system.as_ref();
    let points: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(40);
    let step: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.5);
    let replicates: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(2);
    let times: Vec<f64> = (1..=points).map(|k| k as f64 * step).collect();
    let base = d.factors("base")?.clone();
    let observed = vec![Experiment::new(base.clone()).measure(d.observable("x")?, times.clone())];
    let data = simulate_dataset(
        model,
        &d.default_theta,
        &observed,
        &NoiseSpec::normal(1.0).with_known_variance(),
        replicates,
        seed,
    )?;

    let clock = Instant::now();
    let mut fit_opts = FitOptions::new(d.parameter_space.clone());
    let best = fit(model, &observed, &data, &fit_opts, seed)?;
    println!("fit: theta* = {:?}, z* = {:.3} ({:.1?})", best.theta_star, best.z_star, clock.elapsed());

    fit_opts.restarts = 0;
    let interval =
        bootstrap_interval(model, &observed, &data, &best.theta_star, &fit_opts, &BootstrapOptions::default(), seed)?;
    println!("bootstrap: [{:.3}, {:.3}] ({:.1?})", interval.lower, interval.upper, clock.elapsed());

    // No predator data: its deviation scale is the known noise level.
    let predict = PredictionProblem::new(Experiment::new(base).measure(d.observable("y")?, times)).with_scale("y", 1.0);
    let opts = DeviationOptions::new(d.parameter_space.clone());
    let dev = solve_prediction_deviation(
        model,
        &observed,
        &data,
        &[predict.clone()],
        &best.theta_star,
        interval.upper,
        &opts,
        seed,
    )?;
    println!("deviation: {:.3} ({:.1?})", dev.value, clock.elapsed());
    println!("  pair: {:?} / {:?}", dev.theta_bar_1, dev.theta_bar_2);
    let truth_gap = predev::deviation::z_dev(
        model,
        &d.default_theta,
        &best.theta_star,
        &[predict.clone()],
        Some(&data),
        &predev::ode::Tolerances::fitting(),
    )?;
    println!("  truth vs best fit on the prediction: {truth_gap:.3}");
    let gap = dev.trace.iter().map(|p| (p.model_1 - p.model_2).abs()).fold(0.0, f64::max);
    println!("  largest predator gap: {gap:.3} sigma");
    Ok(())
}
