//! Fit the Lorenz system to noisy `x(t)` and measure how far apart two
//! good-fit models can be when extrapolating to a new initial condition.

use std::time::Instant;

use predev::deviation::{solve_prediction_deviation, DeviationOptions, PredictionProblem};
use predev::estimation::{bootstrap_interval, fit, BootstrapOptions, Experiment, FitOptions};
use predev::models::{lorenz, simulate_dataset, NoiseSpec};

fn main() -> predev::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(11);
    let sigma: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.25);
    let d = lorenz();
    let model = d.system.as_ref();
    let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
    let x = d.observable("x")?;
    let observed = vec![Experiment::new(d.factors("y0=20")?.clone()).measure(x.clone(), times.clone())];
    let data =
        simulate_dataset(model, &d.default_theta, &observed, &NoiseSpec::normal(sigma).with_known_variance(), 1, seed)?;

    let clock = Instant::now();
    let mut fit_opts = FitOptions::new(d.parameter_space.clone());
    let mut best = fit(model, &observed, &data, &fit_opts, seed)?;
    println!("fit: theta* = {:?}, z* = {:.3} ({:.1?})", best.theta_star, best.z_star, clock.elapsed());
    let converged = best.restarts.iter().filter(|r| r.status.converged()).count();
    println!("  {converged}/{} restarts converged", best.restarts.len());

    fit_opts.restarts = 0;
    let interval =
        bootstrap_interval(model, &observed, &data, &best.theta_star, &fit_opts, &BootstrapOptions::default(), seed)?;
    println!("bootstrap: [{:.3}, {:.3}] ({:.1?})", interval.lower, interval.upper, clock.elapsed());
    best.interval = Some(interval.clone());

    let predict = PredictionProblem::new(Experiment::new(d.factors("y0=7")?.clone()).measure(x, times));
    let opts = DeviationOptions::new(d.parameter_space.clone());
    let dev =
        solve_prediction_deviation(model, &observed, &data, &[predict], &best.theta_star, interval.upper, &opts, seed)?;
    println!("deviation: {:.3} ({:.1?})", dev.value, clock.elapsed());
    println!("  pair: {:?} / {:?}", dev.theta_bar_1, dev.theta_bar_2);
    println!("  fit errors: {:?}", dev.fit_errors);
    let wide = dev.trace.iter().filter(|p| (p.model_1 - p.model_2).abs() > 10.0 * sigma).count();
    println!("  {wide}/{} prediction points differ by more than 10 sigma", dev.trace.len());
    Ok(())
}
