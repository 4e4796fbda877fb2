use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binomial_slack;
use crate::error::{Error, Result};
use crate::estimation::{fit, z_fit, Experiment, FitOptions};
use crate::models::{simulate_dataset, NoiseSpec};
use crate::ode::{ModelSystem, Tolerances};
use crate::rng;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderingSpec {
    pub theta_true: Vec<f64>,
    /// Fixed comparison model; `None` fits one to a pilot dataset.
    pub theta_star: Option<Vec<f64>>,
    pub noise: NoiseSpec,
    pub experiments: Vec<Experiment>,
    pub replicates: usize,
    pub trials: usize,
    /// Thresholds at which exceedance frequencies are compared.
    pub thresholds: Vec<f64>,
    pub fit: FitOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderingReport {
    pub theta_star: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// `P̂(z_fit(θ_true) > x)` per threshold.
    pub exceed_true: Vec<f64>,
    /// `P̂(z_fit(θ*) > x)` per threshold.
    pub exceed_star: Vec<f64>,
    pub slack: Vec<f64>,
    /// Thresholds where the true model's exceedance beat θ*'s by more than the slack.
    pub violations: Vec<f64>,
    /// Per trial `(z_fit(θ_true), z_fit(θ*))`.
    pub trials: Vec<(f64, f64)>,
    pub excluded: usize,
}

impl OrderingReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compare the fit-error distributions of the true model and a fixed model
/// `θ*` over fresh datasets. Trial `t` simulates with seed
/// `derive_seed(seed, "trial", t)`; the pilot uses `"pilot"`.
pub fn check_fit_error_ordering(model: &dyn ModelSystem, spec: &OrderingSpec, seed: u64) -> Result<OrderingReport> {
    if spec.trials == 0 {
        return Err(Error::Config("ordering check needs at least one trial".into()));
    }
    let tol = Tolerances::fitting();
    let theta_star = match &spec.theta_star {
        Some(t) => t.clone(),
        None => {
            let pilot_seed = rng::derive_seed(seed, "pilot", 0);
            let mut data =
                simulate_dataset(model, &spec.theta_true, &spec.experiments, &spec.noise, spec.replicates, pilot_seed)?;
            data.estimate_missing_variances(None)?;
            fit(model, &spec.experiments, &data, &spec.fit, pilot_seed)?.theta_star
        }
    };
    let outcomes: Vec<Option<(f64, f64)>> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let s = rng::derive_seed(seed, "trial", t as u64);
            let run = || -> Result<(f64, f64)> {
                let mut data =
                    simulate_dataset(model, &spec.theta_true, &spec.experiments, &spec.noise, spec.replicates, s)?;
                data.estimate_missing_variances(None)?;
                Ok((
                    z_fit(model, &spec.theta_true, &spec.experiments, &data, &tol)?,
                    z_fit(model, &theta_star, &spec.experiments, &data, &tol)?,
                ))
            };
            match run() {
                Ok(v) if v.0.is_finite() && v.1.is_finite() => Some(v),
                Ok(_) => None,
                Err(e) => {
                    log::warn!("ordering trial {t} excluded: {e}");
                    None
                }
            }
        })
        .collect();
    let excluded = outcomes.iter().filter(|o| o.is_none()).count();
    if excluded * 10 > spec.trials {
        return Err(Error::StudyInvalid { excluded, trials: spec.trials });
    }
    let trials: Vec<(f64, f64)> = outcomes.into_iter().flatten().collect();
    let n = trials.len();
    let frac = |f: &dyn Fn(&(f64, f64)) -> bool| trials.iter().filter(|v| f(v)).count() as f64 / n as f64;
    let mut report = OrderingReport {
        theta_star,
        thresholds: spec.thresholds.clone(),
        exceed_true: Vec::new(),
        exceed_star: Vec::new(),
        slack: Vec::new(),
        violations: Vec::new(),
        trials: Vec::new(),
        excluded,
    };
    for &x in &spec.thresholds {
        let a = frac(&|v| v.0 > x);
        let b = frac(&|v| v.1 > x);
        let p = 0.5 * (a + b);
        // Difference of two proportions: √2 on one standard error, plus a 1/n floor.
        let slack = std::f64::consts::SQRT_2 * binomial_slack(p, n) + 1.0 / n as f64;
        if a > b + slack {
            report.violations.push(x);
        }
        report.exceed_true.push(a);
        report.exceed_star.push(b);
        report.slack.push(slack);
    }
    report.trials = trials;
    Ok(report)
}
