use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{actual_impact, CandidateExperiment, DataSource, DesignContext, DesignSettings, SimulatedSource};
use crate::deviation::PredictionProblem;
use crate::error::{Error, Result};
use crate::estimation::Experiment;
use crate::models::{simulate_dataset, NoiseSpec};
use crate::ode::ModelSystem;
use crate::rng;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorstCaseSpec {
    pub theta_true: Vec<f64>,
    pub noise: NoiseSpec,
    pub experiments: Vec<Experiment>,
    pub replicates: usize,
    pub problems: Vec<PredictionProblem>,
    pub candidates: Vec<CandidateExperiment>,
    pub trials: usize,
    pub settings: DesignSettings,
    /// Only estimates predicting at least this relative reduction are checked.
    pub reduction_threshold: f64,
    /// Allowed excess of the actual deviation over the estimate, relative.
    pub relative_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseOutcome {
    pub trial: usize,
    pub candidate: String,
    pub current: f64,
    pub estimated: f64,
    pub actual: f64,
    pub predicted_reduction: f64,
    /// The estimate predicted a reduction of at least the threshold.
    pub qualifies: bool,
    /// `actual ≤ estimated · (1 + slack)`.
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorstCaseReport {
    pub outcomes: Vec<WorstCaseOutcome>,
    pub excluded: Vec<(usize, String)>,
    pub trials: usize,
    pub qualifying: usize,
    pub holding: usize,
    /// Fraction of qualifying outcomes where the estimate bounded the actual
    /// deviation; 1 when nothing qualified.
    pub rate: f64,
    pub required_rate: f64,
}

impl WorstCaseReport {
    pub fn passed(&self) -> bool {
        self.rate >= self.required_rate
    }
}

fn run_trial(
    model: &Arc<dyn ModelSystem>,
    spec: &WorstCaseSpec,
    index: usize,
    seed: u64,
) -> Result<Vec<WorstCaseOutcome>> {
    let data =
        simulate_dataset(model.as_ref(), &spec.theta_true, &spec.experiments, &spec.noise, spec.replicates, seed)?;
    let ctx = DesignContext::new(
        model.clone(),
        spec.experiments.clone(),
        data,
        spec.problems.clone(),
        spec.settings.clone(),
        seed,
    )?;
    let mut source =
        SimulatedSource { model: model.clone(), theta_true: spec.theta_true.clone(), noise: spec.noise.clone(), seed };
    let current = ctx.deviation.value;
    let mut out = Vec::new();
    for candidate in &spec.candidates {
        let estimate = ctx.estimate_impact(candidate, seed)?;
        let new_data = source.acquire(candidate)?;
        let actual = actual_impact(&ctx, candidate, &new_data, seed)?.value;
        let predicted_reduction = if current > 0.0 { 1.0 - estimate.value / current } else { 0.0 };
        out.push(WorstCaseOutcome {
            trial: index,
            candidate: candidate.name.clone(),
            current,
            estimated: estimate.value,
            actual,
            predicted_reduction,
            qualifies: predicted_reduction >= spec.reduction_threshold,
            holds: actual <= estimate.value * (1.0 + spec.relative_slack) + 1e-12,
        });
    }
    Ok(out)
}

/// Simulate the completed experiments, estimate every candidate's impact,
/// then simulate each candidate and compare the post-experiment deviation
/// with its estimate. Trial `t` uses `derive_seed(seed, "trial", t)`.
pub fn check_worst_case(
    model: Arc<dyn ModelSystem>,
    spec: &WorstCaseSpec,
    required_rate: f64,
    seed: u64,
) -> Result<WorstCaseReport> {
    if spec.trials == 0 || spec.candidates.is_empty() {
        return Err(Error::Config("worst-case check needs trials and candidates".into()));
    }
    let results: Vec<(usize, Result<Vec<WorstCaseOutcome>>)> = (0..spec.trials)
        .into_par_iter()
        .map(|t| (t, run_trial(&model, spec, t, rng::derive_seed(seed, "trial", t as u64))))
        .collect();
    let mut outcomes = Vec::new();
    let mut excluded = Vec::new();
    for (t, r) in results {
        match r {
            Ok(o) => outcomes.extend(o),
            Err(e) => {
                log::warn!("worst-case trial {t} excluded: {e}");
                excluded.push((t, e.to_string()));
            }
        }
    }
    if excluded.len() * 10 > spec.trials {
        return Err(Error::StudyInvalid { excluded: excluded.len(), trials: spec.trials });
    }
    let qualifying = outcomes.iter().filter(|o| o.qualifies).count();
    let holding = outcomes.iter().filter(|o| o.qualifies && o.holds).count();
    let rate = if qualifying == 0 { 1.0 } else { holding as f64 / qualifying as f64 };
    Ok(WorstCaseReport { outcomes, excluded, trials: spec.trials, qualifying, holding, rate, required_rate })
}
