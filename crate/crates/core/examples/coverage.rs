//! How often does the true model lie inside the deviation pair's reach?
//! Runs the coverage study on the decay or Lotka–Volterra model.
//!
//! `cargo run --release --example coverage -- [decay|lv] [trials] [seed] [restarts]`

use std::time::Instant;

use predev::deviation::{DeviationOptions, PredictionProblem};
use predev::estimation::{BootstrapOptions, Experiment, FitOptions};
use predev::models::{decay, lotka_volterra, NoiseSpec};
use predev::validation::{run_coverage_study, CoverageSpec};

fn main() -> predev::Result<()> {
    let mut args = std::env::args().skip(1);
    let which = args.next().unwrap_or_else(|| "decay".into());
    let trials: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(200);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let restarts: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);

    let (d, experiments, problems, sigma, replicates) = if which == "lv" {
        let d = lotka_volterra();
        let base = d.factors("base")?.clone();
        let times: Vec<f64> = (1..=40).map(|k| k as f64 * 0.5).collect();
        let observed = vec![Experiment::new(base.clone()).measure(d.observable("x")?, times.clone())];
        let predict =
            PredictionProblem::new(Experiment::new(base).measure(d.observable("y")?, times)).with_scale("y", 1.0);
        (d, observed, vec![predict], 1.0, 2)
    } else {
        let d = decay();
        let observed = vec![Experiment::new(d.factors("x0=1")?.clone())
            .measure(d.observable("x")?, (1..=8).map(|k| k as f64 * 0.25).collect())];
        let predict = PredictionProblem::new(
            Experiment::new(d.factors("x0=2")?.clone()).measure(d.observable("x")?, vec![2.0, 3.0]),
        );
        (d, observed, vec![predict], 0.05, 1)
    };
    let mut fit = FitOptions::new(d.parameter_space.clone());
    // Oscillatory fits have many local minima; a handful of starts is not enough.
    fit.restarts = if which == "lv" { 20 } else { 3 };
    let mut deviation = DeviationOptions::new(d.parameter_space.clone());
    deviation.restarts = restarts;
    let spec = CoverageSpec {
        theta_true: d.default_theta.clone(),
        noise: NoiseSpec::normal(sigma).with_known_variance(),
        experiments,
        replicates,
        problems,
        trials,
        fit,
        bootstrap: BootstrapOptions { samples: 100, ..Default::default() },
        deviation,
        tolerance: 1e-6,
    };
    let clock = Instant::now();
    let study = run_coverage_study(d.system.as_ref(), &spec, seed)?;
    println!(
        "{}: coverage {:.3} over {} trials ({} excluded), true model feasible in {:.3}, slack {:.3} ({:.1?})",
        d.name,
        study.coverage,
        study.trials.len(),
        study.excluded.len(),
        study.true_feasible_rate,
        study.slack,
        clock.elapsed()
    );
    for t in study.trials.iter().filter(|t| !(t.holds[0] && t.holds[1])) {
        println!(
            "  trial {}: deviation {:.4}, true-model distances {:.4} / {:.4}",
            t.index, t.deviation, t.true_deviations[0], t.true_deviations[1]
        );
    }
    Ok(())
}
