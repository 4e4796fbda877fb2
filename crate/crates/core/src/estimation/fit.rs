use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bootstrap::FitInterval, Dataset, Experiment};
use crate::error::{Error, Result};
use crate::objective::{Conditions, FitLayout};
use crate::ode::{ModelSystem, Tolerances};
use crate::optim::{newton_cg, space::pull_back, Evaluation, NewtonCgOptions, Objective, ParamSpace, Status};
use crate::rng;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitOptions {
    /// Random restarts drawn from the parameter box.
    pub restarts: usize,
    /// Extra deterministic starting points, run before the random ones.
    #[serde(default)]
    pub initial_guesses: Vec<Vec<f64>>,
    pub space: ParamSpace,
    pub newton: NewtonCgOptions,
    pub tolerances: Tolerances,
}

impl FitOptions {
    pub fn new(space: ParamSpace) -> Self {
        Self {
            restarts: 20,
            initial_guesses: Vec::new(),
            space,
            newton: NewtonCgOptions::default(),
            tolerances: Tolerances::fitting(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartRecord {
    pub index: usize,
    pub start: Vec<f64>,
    pub theta: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub status: Status,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_star: Vec<f64>,
    pub z_star: f64,
    /// Filled in by [`super::bootstrap_interval`].
    pub interval: Option<FitInterval>,
    pub restarts: Vec<RestartRecord>,
}

impl FitResult {
    /// Upper end of the bootstrap interval.
    pub fn z_upper(&self) -> Option<f64> {
        self.interval.as_ref().map(|i| i.upper)
    }
}

/// `z_fit` in optimizer coordinates.
pub(crate) struct FitObjective<'a> {
    pub model: &'a dyn ModelSystem,
    pub conditions: &'a Conditions,
    pub layout: &'a FitLayout,
    pub space: &'a ParamSpace,
    pub tol: Tolerances,
}

impl Objective for FitObjective<'_> {
    fn dim(&self) -> usize {
        self.space.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let theta = self.space.to_theta(x);
        match self.conditions.simulate(self.model, &theta, false, &self.tol) {
            Some(tr) => self.layout.value(&tr),
            None => f64::INFINITY,
        }
    }

    fn evaluate(&self, x: &[f64]) -> Option<Evaluation> {
        let theta = self.space.to_theta(x);
        let tr = self.conditions.simulate(self.model, &theta, true, &self.tol)?;
        let mut d = self.layout.derivatives(&tr);
        if !d.value.is_finite() {
            return None;
        }
        pull_back(&self.space.jacobian_diag(&theta), &mut d.gradient, Some(&mut d.curvature));
        Some(Evaluation { value: d.value, gradient: d.gradient, curvature: Some(d.curvature) })
    }

    fn box_bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some(self.space.internal_box())
    }
}

pub(crate) fn run_restart(
    obj: &FitObjective<'_>,
    index: usize,
    start: Vec<f64>,
    newton: &NewtonCgOptions,
) -> RestartRecord {
    let x0 = match obj.space.to_internal(&start) {
        Ok(x) => x,
        Err(_) => {
            return RestartRecord {
                index,
                theta: start.clone(),
                start,
                objective: f64::INFINITY,
                iterations: 0,
                status: Status::Failed,
            }
        }
    };
    let r = newton_cg(obj, &x0, newton);
    RestartRecord {
        index,
        start,
        theta: obj.space.to_theta(&r.x),
        objective: r.value,
        iterations: r.iterations,
        status: r.status,
    }
}

/// Best-fit parameters by Newton–CG from the given guesses plus random
/// restarts (stream `fit.restart.k`).
pub fn fit(
    model: &dyn ModelSystem,
    experiments: &[Experiment],
    dataset: &Dataset,
    opts: &FitOptions,
    seed: u64,
) -> Result<FitResult> {
    if opts.space.dim() != model.param_dim() {
        return Err(Error::Config(format!(
            "parameter box has {} entries for a {}-parameter model",
            opts.space.dim(),
            model.param_dim()
        )));
    }
    let total = opts.initial_guesses.len() + opts.restarts;
    if total == 0 {
        return Err(Error::Config("fit needs at least one restart".into()));
    }
    dataset.validate()?;
    let conditions = Conditions::from_experiments(experiments)?;
    let layout = FitLayout::new(model, experiments, dataset, &conditions)?;
    let obj =
        FitObjective { model, conditions: &conditions, layout: &layout, space: &opts.space, tol: opts.tolerances };

    let starts: Vec<Vec<f64>> = opts
        .initial_guesses
        .iter()
        .cloned()
        .chain((0..opts.restarts).map(|k| opts.space.sample(&mut rng::stream(seed, "fit.restart", k as u64))))
        .collect();
    let records: Vec<RestartRecord> =
        starts.into_par_iter().enumerate().map(|(k, s)| run_restart(&obj, k, s, &opts.newton)).collect();

    let best = records
        .iter()
        .filter(|r| r.status.converged() && r.objective.is_finite())
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.index.cmp(&b.index)));
    let Some(best) = best else {
        return Err(Error::FitFailed { restarts: total, objectives: records.iter().map(|r| r.objective).collect() });
    };
    log::debug!("fit: best objective {} from restart {}", best.objective, best.index);
    Ok(FitResult { theta_star: best.theta.clone(), z_star: best.objective, interval: None, restarts: records })
}
