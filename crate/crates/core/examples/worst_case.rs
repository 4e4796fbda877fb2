//! Do impact estimates bound what actually happens? On a two-step chain
//! where the second species was measured only once, estimate each
//! candidate's impact, then simulate the candidate and re-solve.
//!
//! `cargo run --release --example worst_case -- [trials] [seed] [eta multiplier]`

use std::time::Instant;

use predev::design::{CandidateExperiment, DesignSettings};
use predev::deviation::{DeviationOptions, PredictionProblem};
use predev::estimation::{BootstrapOptions, Experiment, FitOptions};
use predev::models::{chain, NoiseSpec};
use predev::validation::{check_worst_case, WorstCaseSpec};

fn main() -> predev::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(50);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let multiplier: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(4.0);

    let d = chain();
    let from_x = d.factors("x")?.clone();
    let from_y = d.factors("y")?.clone();
    let x = d.observable("x")?;
    let y = d.observable("y")?;
    let sigma = 0.2;

    let experiments = vec![Experiment::new(from_x.clone())
        .measure(x.clone(), vec![0.5, 1.0, 1.5, 2.0])
        .measure(y.clone(), vec![3.0])];
    let predict = PredictionProblem::new(Experiment::new(from_x.clone()).measure(y.clone(), vec![1.0, 2.0, 3.0, 4.0]))
        .with_scale("y", sigma);
    let candidates = vec![
        CandidateExperiment::new("y early", Experiment::new(from_x.clone()).measure(y.clone(), vec![0.5, 1.0]), 2)
            .with_scale("y", sigma),
        CandidateExperiment::new("y from y0", Experiment::new(from_y).measure(y, vec![1.0, 2.0, 3.0]), 2)
            .with_scale("y", sigma),
        CandidateExperiment::new("x late", Experiment::new(from_x).measure(x, vec![3.0, 4.0]), 2),
    ];

    let mut fit = FitOptions::new(d.parameter_space.clone());
    fit.restarts = 5;
    let mut deviation = DeviationOptions::new(d.parameter_space.clone());
    deviation.restarts = 5;
    let mut settings = DesignSettings::new(fit, deviation);
    settings.bootstrap = BootstrapOptions { samples: 100, ..Default::default() };
    settings.eta.multiplier = multiplier;

    let spec = WorstCaseSpec {
        theta_true: d.default_theta.clone(),
        noise: NoiseSpec::normal(sigma).with_known_variance(),
        experiments,
        replicates: 2,
        problems: vec![predict],
        candidates,
        trials,
        settings,
        reduction_threshold: 0.2,
        relative_slack: 0.1,
    };
    let clock = Instant::now();
    let report = check_worst_case(d.system.clone(), &spec, 0.9, seed)?;
    println!(
        "{} of {} qualifying estimates bounded the actual deviation ({:.3}; {} trials, {} excluded, {:.1?})",
        report.holding,
        report.qualifying,
        report.rate,
        report.trials,
        report.excluded.len(),
        clock.elapsed()
    );
    for o in report.outcomes.iter().filter(|o| o.qualifies && !o.holds) {
        println!(
            "  trial {} {}: current {:.3}, estimated {:.3}, actual {:.3}",
            o.trial, o.candidate, o.current, o.estimated, o.actual
        );
    }
    Ok(())
}
