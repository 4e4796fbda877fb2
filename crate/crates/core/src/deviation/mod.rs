//! The deviation between two models on prediction problems, and the
//! search for the most different pair of models that both fit the data.

mod engine;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{Dataset, Experiment};
use crate::objective::{Conditions, DevLayout};
use crate::ode::{ModelSystem, Tolerances};
use crate::optim::{BarrierOptions, ParamSpace};

pub(crate) use engine::{Engine, PairConstraint};

/// What to predict: observables, times and conditions, plus the scale used
/// to normalize differences per observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionProblem {
    pub experiment: Experiment,
    /// σ per observable name. Missing entries fall back to the σ of the same
    /// observable in the data.
    #[serde(default)]
    pub scales: BTreeMap<String, f64>,
}

impl PredictionProblem {
    pub fn new(experiment: Experiment) -> Self {
        Self { experiment, scales: BTreeMap::new() }
    }

    pub fn with_scale(mut self, observable: &str, sigma: f64) -> Self {
        self.scales.insert(observable.to_string(), sigma);
        self
    }

    /// σ for `observable`: explicit scale, else the data's σ for that
    /// observable under the same condition, else its mean over conditions.
    pub fn scale(&self, observable: &str, dataset: Option<&Dataset>) -> Result<f64> {
        resolve_scale(&self.scales, &self.experiment, observable, dataset)
    }
}

pub(crate) fn resolve_scale(
    scales: &BTreeMap<String, f64>,
    experiment: &Experiment,
    observable: &str,
    dataset: Option<&Dataset>,
) -> Result<f64> {
    if let Some(&s) = scales.get(observable) {
        return Ok(s);
    }
    if let Some(d) = dataset {
        if let Some(v) = d.find(experiment.condition_id(), observable).and_then(|s| s.variance) {
            return Ok(v.sqrt());
        }
        if let Some(s) = d.default_sigma(observable) {
            return Ok(s);
        }
    }
    Err(Error::Config(format!(
        "no deviation scale for '{observable}' under condition '{}': supply one explicitly",
        experiment.condition_id()
    )))
}

pub(crate) fn problem_layout(
    model: &dyn ModelSystem,
    problems: &[PredictionProblem],
    dataset: Option<&Dataset>,
    conditions: &Conditions,
) -> Result<DevLayout> {
    if problems.is_empty() {
        return Err(Error::InvalidInput("at least one prediction problem is required".into()));
    }
    let designs: Vec<&Experiment> = problems.iter().map(|p| &p.experiment).collect();
    DevLayout::new(model, &designs, conditions, |e, obs| {
        let p = problems.iter().find(|p| std::ptr::eq(&p.experiment, e)).expect("layout iterates the given problems");
        Ok((p.scale(obs, dataset)?, 1.0))
    })
}

/// Normalized squared difference of two models on the prediction problems.
/// `+∞` when either model fails to integrate.
pub fn z_dev(
    model: &dyn ModelSystem,
    theta1: &[f64],
    theta2: &[f64],
    problems: &[PredictionProblem],
    dataset: Option<&Dataset>,
    tol: &Tolerances,
) -> Result<f64> {
    let conditions = Conditions::from_experiments(problems.iter().map(|p| &p.experiment))?;
    let layout = problem_layout(model, problems, dataset, &conditions)?;
    let (Some(a), Some(b)) =
        (conditions.simulate(model, theta1, false, tol), conditions.simulate(model, theta2, false, tol))
    else {
        return Ok(f64::INFINITY);
    };
    Ok(layout.value(&a, &b))
}

/// `z_dev` and its gradient in the stacked vector `(θ¹, θ²)`. `None` when
/// either model fails to integrate.
pub fn z_dev_gradient(
    model: &dyn ModelSystem,
    theta1: &[f64],
    theta2: &[f64],
    problems: &[PredictionProblem],
    dataset: Option<&Dataset>,
    tol: &Tolerances,
) -> Result<Option<(f64, Vec<f64>)>> {
    let conditions = Conditions::from_experiments(problems.iter().map(|p| &p.experiment))?;
    let layout = problem_layout(model, problems, dataset, &conditions)?;
    let (Some(a), Some(b)) =
        (conditions.simulate(model, theta1, true, tol), conditions.simulate(model, theta2, true, tol))
    else {
        return Ok(None);
    };
    let d = layout.derivatives(&a, &b);
    Ok(Some((d.value, d.gradient)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviationOptions {
    pub restarts: usize,
    pub barrier: BarrierOptions,
    /// Accepted random-walk steps per member when building a start pair.
    pub walk_steps: usize,
    /// Walk step standard deviation relative to `|θ*|`.
    pub walk_scale: f64,
    pub walk_floor: f64,
    /// Relative tolerance on the fit (and closeness) constraints.
    pub feasibility_tol: f64,
    /// Values below this count as "no deviation".
    pub zero_tol: f64,
    pub space: ParamSpace,
    pub barrier_tolerances: Tolerances,
    pub final_tolerances: Tolerances,
    /// Extra start pairs, moved toward `(θ*, θ*)` until strictly feasible.
    #[serde(default)]
    pub warm_starts: Vec<(Vec<f64>, Vec<f64>)>,
}

impl DeviationOptions {
    pub fn new(space: ParamSpace) -> Self {
        Self {
            restarts: 20,
            barrier: BarrierOptions::default(),
            walk_steps: 100,
            walk_scale: 0.02,
            walk_floor: 1e-6,
            feasibility_tol: 1e-6,
            zero_tol: 1e-8,
            space,
            barrier_tolerances: Tolerances::barrier(),
            final_tolerances: Tolerances::fitting(),
            warm_starts: Vec::new(),
        }
    }
}

/// Model outputs of the pair at one prediction point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub condition_id: String,
    pub observable: String,
    pub time: f64,
    pub model_1: f64,
    pub model_2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub index: usize,
    pub warm: bool,
    pub start_value: f64,
    pub value: f64,
    pub feasible: bool,
    pub inner_iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviationResult {
    pub theta_bar_1: Vec<f64>,
    pub theta_bar_2: Vec<f64>,
    /// `z_dev(θ̄¹, θ̄²)` on the prediction problems.
    pub value: f64,
    pub fit_errors: [f64; 2],
    /// `max(z_fit(θ̄ⁱ) − z*_u, 0)`.
    pub feasibility_residuals: [f64; 2],
    /// Deviation on the candidate experiment, for impact estimates.
    pub candidate_deviation: Option<f64>,
    pub eta: Option<f64>,
    pub z_upper: f64,
    pub no_deviation_found: bool,
    pub trace: Vec<TracePoint>,
    pub candidate_trace: Vec<TracePoint>,
    pub restarts: Vec<RestartOutcome>,
}

/// Maximize `z_dev(θ¹, θ²)` on `problems` subject to
/// `z_fit(θⁱ) ≤ z_upper` for both members. Random restarts use streams
/// `dev.restart.k`.
#[allow(clippy::too_many_arguments)]
pub fn solve_prediction_deviation(
    model: &dyn ModelSystem,
    experiments: &[Experiment],
    dataset: &Dataset,
    problems: &[PredictionProblem],
    theta_star: &[f64],
    z_upper: f64,
    opts: &DeviationOptions,
    seed: u64,
) -> Result<DeviationResult> {
    let engine = Engine::new(model, experiments, dataset, problems, None, z_upper, &opts.space)?;
    engine.solve(theta_star, opts, seed)
}
