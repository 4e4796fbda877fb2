use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binomial_slack;
use crate::deviation::{solve_prediction_deviation, z_dev, DeviationOptions, PredictionProblem};
use crate::error::{Error, Result};
use crate::estimation::{bootstrap_interval, fit, z_fit, BootstrapOptions, Experiment, FitOptions};
use crate::models::{simulate_dataset, NoiseSpec};
use crate::ode::{ModelSystem, Tolerances};
use crate::rng;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageSpec {
    pub theta_true: Vec<f64>,
    pub noise: NoiseSpec,
    pub experiments: Vec<Experiment>,
    pub replicates: usize,
    pub problems: Vec<PredictionProblem>,
    pub trials: usize,
    pub fit: FitOptions,
    pub bootstrap: BootstrapOptions,
    pub deviation: DeviationOptions,
    /// Relative slack on each inequality.
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageTrial {
    pub index: usize,
    pub seed: u64,
    pub z_star: f64,
    pub z_upper: f64,
    pub true_fit_error: f64,
    pub deviation: f64,
    /// `z_dev(θ_true, θ̄ⁱ)` for both members.
    pub true_deviations: [f64; 2],
    /// Whether each inequality `z_dev(θ_true, θ̄ⁱ) ≤ z_dev(θ̄¹, θ̄²)` held.
    pub holds: [bool; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageStudy {
    pub trials: Vec<CoverageTrial>,
    pub excluded: Vec<(usize, String)>,
    /// Fraction of kept trials where both inequalities held.
    pub coverage: f64,
    /// Fraction where the true model was feasible, `z_fit(θ_true) ≤ z*_u`.
    pub true_feasible_rate: f64,
    /// Three binomial standard errors at the nominal level.
    pub slack: f64,
    pub alpha: f64,
}

impl CoverageStudy {
    /// Coverage is at least `1 − α` minus the binomial slack.
    pub fn passed(&self) -> bool {
        self.coverage >= 1.0 - self.alpha - self.slack
    }
}

fn run_trial(spec: &CoverageSpec, model: &dyn ModelSystem, index: usize, seed: u64) -> Result<CoverageTrial> {
    let tol = Tolerances::fitting();
    let mut data = simulate_dataset(model, &spec.theta_true, &spec.experiments, &spec.noise, spec.replicates, seed)?;
    data.estimate_missing_variances(None)?;
    let best = fit(model, &spec.experiments, &data, &spec.fit, seed)?;
    let interval =
        bootstrap_interval(model, &spec.experiments, &data, &best.theta_star, &spec.fit, &spec.bootstrap, seed)?;
    let dev = solve_prediction_deviation(
        model,
        &spec.experiments,
        &data,
        &spec.problems,
        &best.theta_star,
        interval.upper,
        &spec.deviation,
        seed,
    )?;
    let d1 = z_dev(model, &spec.theta_true, &dev.theta_bar_1, &spec.problems, Some(&data), &tol)?;
    let d2 = z_dev(model, &spec.theta_true, &dev.theta_bar_2, &spec.problems, Some(&data), &tol)?;
    let bound = dev.value * (1.0 + spec.tolerance) + 1e-12;
    Ok(CoverageTrial {
        index,
        seed,
        z_star: best.z_star,
        z_upper: interval.upper,
        true_fit_error: z_fit(model, &spec.theta_true, &spec.experiments, &data, &tol)?,
        deviation: dev.value,
        true_deviations: [d1, d2],
        holds: [d1 <= bound, d2 <= bound],
    })
}

/// Simulate data from `θ_true`, fit, bootstrap, solve the deviation problem
/// and check that the true model is no farther from either member than the
/// members are from each other. Trial `t` uses seed
/// `derive_seed(seed, "trial", t)` for every stage.
pub fn run_coverage_study(model: &dyn ModelSystem, spec: &CoverageSpec, seed: u64) -> Result<CoverageStudy> {
    if spec.trials < 100 {
        return Err(Error::Config(format!("coverage studies need at least 100 trials, got {}", spec.trials)));
    }
    spec.noise.distribution.validate()?;
    let results: Vec<(usize, Result<CoverageTrial>)> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let s = rng::derive_seed(seed, "trial", t as u64);
            (t, run_trial(spec, model, t, s))
        })
        .collect();
    let mut trials = Vec::new();
    let mut excluded = Vec::new();
    for (t, r) in results {
        match r {
            Ok(tr) => trials.push(tr),
            Err(e) => {
                log::warn!("coverage trial {t} excluded: {e}");
                excluded.push((t, e.to_string()));
            }
        }
    }
    if excluded.len() * 10 > spec.trials {
        return Err(Error::StudyInvalid { excluded: excluded.len(), trials: spec.trials });
    }
    let n = trials.len() as f64;
    let coverage = trials.iter().filter(|t| t.holds[0] && t.holds[1]).count() as f64 / n;
    let true_feasible_rate = trials.iter().filter(|t| t.true_fit_error <= t.z_upper).count() as f64 / n;
    let alpha = spec.bootstrap.alpha;
    Ok(CoverageStudy {
        slack: binomial_slack(1.0 - alpha, trials.len()),
        trials,
        excluded,
        coverage,
        true_feasible_rate,
        alpha,
    })
}
