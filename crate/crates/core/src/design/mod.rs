//! Worst-case impact of candidate experiments, candidate ranking, and the
//! greedy sequential design loop.

mod eta;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use eta::{eta_chi2, eta_default, EtaMode, EtaRule};

use crate::deviation::{DeviationOptions, DeviationResult, Engine, PairConstraint, PredictionProblem};
use crate::error::{Error, Result};
use crate::estimation::{bootstrap_interval, fit, BootstrapOptions, Dataset, Experiment, FitOptions, FitResult};
use crate::models::{simulate_dataset, NoiseSpec};
use crate::ode::ModelSystem;
use crate::rng;

/// An experiment that could be run next, with its planned replicate count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateExperiment {
    pub name: String,
    pub experiment: Experiment,
    pub replicates: usize,
    /// Deviation scale per observable; defaults to the σ seen in the data.
    #[serde(default)]
    pub scales: BTreeMap<String, f64>,
    /// Explicit η; `None` applies the context's rule.
    #[serde(default)]
    pub eta: Option<f64>,
}

impl CandidateExperiment {
    pub fn new(name: impl Into<String>, experiment: Experiment, replicates: usize) -> Self {
        Self { name: name.into(), experiment, replicates, scales: BTreeMap::new(), eta: None }
    }

    pub fn with_scale(mut self, observable: &str, sigma: f64) -> Self {
        self.scales.insert(observable.to_string(), sigma);
        self
    }

    /// Scheduled observations, replicates included.
    pub fn observation_count(&self) -> usize {
        self.experiment.slot_count() * self.replicates
    }
}

/// Worst-case post-experiment deviation for one candidate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImpactEstimate {
    pub candidate: String,
    pub theta_hat_1: Vec<f64>,
    pub theta_hat_2: Vec<f64>,
    pub value: f64,
    pub eta: f64,
    pub candidate_deviation: f64,
    pub observation_count: usize,
    pub detail: DeviationResult,
}

fn overlaps(a: &Experiment, b: &Experiment) -> bool {
    a.condition_id() == b.condition_id()
        && a.measurements.iter().any(|m| {
            b.measurements
                .iter()
                .any(|n| m.observable.name == n.observable.name && m.times.iter().any(|t| n.times.contains(t)))
        })
}

/// Solve the deviation problem with the added constraint
/// `z_dev(θ¹, θ²; P′) ≤ η`. `η = ∞` drops the constraint.
#[allow(clippy::too_many_arguments)]
pub fn estimate_impact(
    model: &dyn ModelSystem,
    experiments: &[Experiment],
    dataset: &Dataset,
    problems: &[PredictionProblem],
    candidate: &CandidateExperiment,
    theta_star: &[f64],
    z_upper: f64,
    eta: f64,
    opts: &DeviationOptions,
    seed: u64,
) -> Result<ImpactEstimate> {
    if candidate.replicates == 0 || candidate.observation_count() == 0 {
        return Err(Error::InvalidInput(format!("candidate '{}' schedules no observations", candidate.name)));
    }
    if let Some(e) = experiments.iter().find(|e| overlaps(e, &candidate.experiment)) {
        return Err(Error::InvalidInput(format!(
            "candidate '{}' repeats measurements of completed experiment '{}'",
            candidate.name,
            e.label()
        )));
    }
    let constraint = PairConstraint {
        experiment: &candidate.experiment,
        replicates: candidate.replicates,
        scales: &candidate.scales,
        eta,
    };
    let engine = Engine::new(model, experiments, dataset, problems, Some(constraint), z_upper, &opts.space)?;
    let detail = engine.solve(theta_star, opts, seed)?;
    Ok(ImpactEstimate {
        candidate: candidate.name.clone(),
        theta_hat_1: detail.theta_bar_1.clone(),
        theta_hat_2: detail.theta_bar_2.clone(),
        value: detail.value,
        eta,
        candidate_deviation: detail.candidate_deviation.unwrap_or(f64::NAN),
        observation_count: candidate.observation_count(),
        detail,
    })
}

/// Solver settings shared by every stage of a design study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignSettings {
    pub fit: FitOptions,
    pub bootstrap: BootstrapOptions,
    pub deviation: DeviationOptions,
    pub eta: EtaRule,
    /// Candidates whose estimate is below `flag_ratio ×` the current
    /// deviation are flagged as predicted to reduce uncertainty.
    pub flag_ratio: f64,
    /// Stop when the best predicted relative reduction stays below this...
    pub stop_threshold: f64,
    /// ...for this many consecutive rounds.
    pub stop_patience: usize,
    /// Lower bound applied when estimating σ² for newly acquired data.
    pub variance_floor: Option<f64>,
}

impl DesignSettings {
    pub fn new(fit: FitOptions, deviation: DeviationOptions) -> Self {
        Self {
            fit,
            bootstrap: BootstrapOptions::default(),
            deviation,
            eta: EtaRule::default(),
            flag_ratio: 0.95,
            stop_threshold: 0.02,
            stop_patience: 2,
            variance_floor: None,
        }
    }
}

/// Completed experiments with their fit, interval and current deviation.
#[derive(Clone)]
pub struct DesignContext {
    pub model: Arc<dyn ModelSystem>,
    pub experiments: Vec<Experiment>,
    pub dataset: Dataset,
    pub problems: Vec<PredictionProblem>,
    pub fit: FitResult,
    pub deviation: DeviationResult,
    pub settings: DesignSettings,
}

impl std::fmt::Debug for DesignContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DesignContext")
            .field("experiments", &self.experiments.len())
            .field("theta_star", &self.fit.theta_star)
            .field("deviation", &self.deviation.value)
            .finish_non_exhaustive()
    }
}

/// One candidate's place in a ranking.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub name: String,
    pub declaration_index: usize,
    pub estimate: Option<ImpactEstimate>,
    pub error: Option<String>,
    /// `1 − estimate / current deviation`.
    pub predicted_reduction: Option<f64>,
    /// Predicted to reduce uncertainty.
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ranking {
    /// Deviation the estimates are compared with.
    pub current_deviation: f64,
    /// Whether an impact pair beat the stored deviation pair and replaced it.
    pub refined: bool,
    /// Best first; failed candidates last.
    pub entries: Vec<RankedCandidate>,
}

impl Ranking {
    pub fn best(&self) -> Option<&RankedCandidate> {
        self.entries.first().filter(|e| e.estimate.is_some())
    }
}

/// Put `new` into `experiments`, merging time points into an existing
/// measurement of the same observable under the same condition.
fn merge_experiment(experiments: &mut Vec<Experiment>, new: &Experiment) {
    let Some(e) = experiments.iter_mut().find(|e| e.condition_id() == new.condition_id()) else {
        experiments.push(new.clone());
        return;
    };
    for m in &new.measurements {
        match e.measurements.iter_mut().find(|n| n.observable.name == m.observable.name) {
            Some(n) => {
                for &t in &m.times {
                    if !n.times.contains(&t) {
                        n.times.push(t);
                    }
                }
                n.times.sort_by(f64::total_cmp);
            }
            None => e.measurements.push(m.clone()),
        }
    }
}

impl DesignContext {
    /// Fit, bootstrap and solve the deviation problem for the completed
    /// experiments.
    pub fn new(
        model: Arc<dyn ModelSystem>,
        experiments: Vec<Experiment>,
        mut dataset: Dataset,
        problems: Vec<PredictionProblem>,
        settings: DesignSettings,
        seed: u64,
    ) -> Result<Self> {
        dataset.estimate_missing_variances(settings.variance_floor)?;
        Self::solve(model, experiments, dataset, problems, settings, seed, None)
    }

    fn solve(
        model: Arc<dyn ModelSystem>,
        experiments: Vec<Experiment>,
        dataset: Dataset,
        problems: Vec<PredictionProblem>,
        settings: DesignSettings,
        seed: u64,
        previous: Option<&DesignContext>,
    ) -> Result<Self> {
        let m = model.as_ref();
        let mut fit_opts = settings.fit.clone();
        if let Some(prev) = previous {
            fit_opts.initial_guesses.insert(0, prev.fit.theta_star.clone());
        }
        let mut best = fit(m, &experiments, &dataset, &fit_opts, seed)?;
        let interval =
            bootstrap_interval(m, &experiments, &dataset, &best.theta_star, &fit_opts, &settings.bootstrap, seed)?;
        let z_u = interval.upper;
        best.interval = Some(interval);
        let mut dev_opts = settings.deviation.clone();
        if let Some(prev) = previous {
            dev_opts.warm_starts.push((prev.deviation.theta_bar_1.clone(), prev.deviation.theta_bar_2.clone()));
        }
        let engine = Engine::new(m, &experiments, &dataset, &problems, None, z_u, &dev_opts.space)?;
        let deviation = engine.solve(&best.theta_star, &dev_opts, seed)?;
        Ok(Self { model, experiments, dataset, problems, fit: best, deviation, settings })
    }

    pub fn z_upper(&self) -> f64 {
        self.fit.z_upper().expect("context fits carry an interval")
    }

    pub fn observation_count(&self) -> usize {
        self.dataset.observation_count_for(&self.experiments)
    }

    pub fn eta_for(&self, candidate: &CandidateExperiment) -> Result<f64> {
        match candidate.eta {
            Some(v) => Ok(v),
            None => self.settings.eta.resolve(self.z_upper(), candidate.observation_count(), self.observation_count()),
        }
    }

    /// Impact estimate warm-started from the current deviation pair.
    pub fn estimate_impact(&self, candidate: &CandidateExperiment, seed: u64) -> Result<ImpactEstimate> {
        let eta = self.eta_for(candidate)?;
        let mut opts = self.settings.deviation.clone();
        opts.warm_starts.push((self.deviation.theta_bar_1.clone(), self.deviation.theta_bar_2.clone()));
        estimate_impact(
            self.model.as_ref(),
            &self.experiments,
            &self.dataset,
            &self.problems,
            candidate,
            &self.fit.theta_star,
            self.z_upper(),
            eta,
            &opts,
            seed,
        )
    }

    /// Estimate every candidate and order them by worst-case deviation.
    ///
    /// Every impact pair is also feasible for the unconstrained deviation
    /// problem, so a pair that beats the stored deviation replaces it before
    /// reductions are computed.
    pub fn rank_candidates(&mut self, candidates: &[CandidateExperiment], seed: u64) -> Result<Ranking> {
        if candidates.is_empty() {
            return Err(Error::InvalidInput("no candidate experiments to rank".into()));
        }
        let results: Vec<Result<ImpactEstimate>> =
            candidates.par_iter().map(|c| self.estimate_impact(c, seed)).collect();

        let mut refined = false;
        for est in results.iter().flatten() {
            if est.value > self.deviation.value {
                let engine = Engine::new(
                    self.model.as_ref(),
                    &self.experiments,
                    &self.dataset,
                    &self.problems,
                    None,
                    self.z_upper(),
                    &self.settings.deviation.space,
                )?;
                let pair = engine.evaluate_pair(
                    &est.theta_hat_1,
                    &est.theta_hat_2,
                    self.settings.deviation.final_tolerances,
                )?;
                if pair.value > self.deviation.value {
                    log::info!(
                        "candidate '{}' found a larger deviation ({} > {}); adopting its pair",
                        est.candidate,
                        pair.value,
                        self.deviation.value
                    );
                    let restarts = std::mem::take(&mut self.deviation.restarts);
                    self.deviation = DeviationResult { restarts, ..pair };
                    refined = true;
                }
            }
        }
        let current = self.deviation.value;
        let mut entries: Vec<RankedCandidate> = candidates
            .iter()
            .zip(results)
            .enumerate()
            .map(|(i, (c, r))| match r {
                Ok(est) => {
                    let reduction = if current > 0.0 { 1.0 - est.value / current } else { 0.0 };
                    RankedCandidate {
                        name: c.name.clone(),
                        declaration_index: i,
                        flagged: est.value < self.settings.flag_ratio * current,
                        predicted_reduction: Some(reduction),
                        estimate: Some(est),
                        error: None,
                    }
                }
                Err(e) => RankedCandidate {
                    name: c.name.clone(),
                    declaration_index: i,
                    estimate: None,
                    error: Some(e.to_string()),
                    predicted_reduction: None,
                    flagged: false,
                },
            })
            .collect();
        entries.sort_by(|a, b| match (&a.estimate, &b.estimate) {
            (Some(x), Some(y)) => x
                .value
                .total_cmp(&y.value)
                .then(x.observation_count.cmp(&y.observation_count))
                .then(a.declaration_index.cmp(&b.declaration_index)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.declaration_index.cmp(&b.declaration_index),
        });
        Ok(Ranking { current_deviation: current, refined, entries })
    }

    /// Refit, re-bootstrap and re-solve with the candidate's data added.
    pub fn extend(&self, candidate: &CandidateExperiment, new_data: &Dataset, seed: u64) -> Result<DesignContext> {
        let mut data = self.dataset.clone();
        data.merge(new_data);
        data.estimate_missing_variances(self.settings.variance_floor)?;
        let mut experiments = self.experiments.clone();
        merge_experiment(&mut experiments, &candidate.experiment);
        Self::solve(
            self.model.clone(),
            experiments,
            data,
            self.problems.clone(),
            self.settings.clone(),
            seed,
            Some(self),
        )
    }
}

/// Deviation after actually observing the candidate.
pub fn actual_impact(
    context: &DesignContext,
    candidate: &CandidateExperiment,
    new_data: &Dataset,
    seed: u64,
) -> Result<DeviationResult> {
    Ok(context.extend(candidate, new_data, seed)?.deviation)
}

/// Supplies observations for a chosen candidate.
pub trait DataSource {
    fn acquire(&mut self, candidate: &CandidateExperiment) -> Result<Dataset>;
}

/// Synthetic observations from known parameters.
pub struct SimulatedSource {
    pub model: Arc<dyn ModelSystem>,
    pub theta_true: Vec<f64>,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl DataSource for SimulatedSource {
    fn acquire(&mut self, candidate: &CandidateExperiment) -> Result<Dataset> {
        // Keyed by name so the same candidate yields the same data regardless of when it is picked.
        let seed = rng::derive_seed(self.seed, &format!("acquire.{}", candidate.name), 0);
        simulate_dataset(
            self.model.as_ref(),
            &self.theta_true,
            std::slice::from_ref(&candidate.experiment),
            &self.noise,
            candidate.replicates,
            seed,
        )
    }
}

/// Observations already on file.
pub struct RecordedSource {
    pub dataset: Dataset,
}

impl DataSource for RecordedSource {
    fn acquire(&mut self, candidate: &CandidateExperiment) -> Result<Dataset> {
        let e = &candidate.experiment;
        let mut out = Dataset::default();
        for m in &e.measurements {
            let s = self.dataset.find(e.condition_id(), &m.observable.name).ok_or_else(|| {
                Error::Data(format!("no recorded data for '{}' under '{}'", m.observable.name, e.condition_id()))
            })?;
            for &t in &m.times {
                let k = s.time_index(t).ok_or_else(|| {
                    Error::Data(format!("no recorded '{}' at t = {t} under '{}'", m.observable.name, e.condition_id()))
                })?;
                for &v in &s.replicates[k] {
                    out.push(e.condition_id(), &m.observable.name, t, v);
                }
            }
            if let Some(v) = s.variance {
                out.find_mut(e.condition_id(), &m.observable.name).expect("series pushed").variance = Some(v);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignRound {
    pub round: usize,
    pub ranking: Ranking,
    pub chosen: String,
    pub predicted_value: f64,
    pub predicted_reduction: f64,
    pub deviation_before: f64,
    pub deviation_after: f64,
    /// `after − before`; positive when the experiment increased uncertainty.
    pub change: f64,
    pub z_upper_after: f64,
    pub theta_star_after: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignTrace {
    pub rounds: Vec<DesignRound>,
    pub stop_reason: String,
}

/// Greedy design: rank, run the best candidate, recompute, repeat.
/// Round `r` uses seed `derive_seed(seed, "round", r)`.
pub fn sequential_design(
    mut context: DesignContext,
    candidates: &[CandidateExperiment],
    source: &mut dyn DataSource,
    rounds: usize,
    seed: u64,
) -> Result<(DesignTrace, DesignContext)> {
    let mut pool: Vec<CandidateExperiment> = candidates.to_vec();
    let mut trace = DesignTrace { rounds: Vec::new(), stop_reason: String::new() };
    let mut quiet = 0;
    for round in 0..rounds {
        if pool.is_empty() {
            trace.stop_reason = "no candidates left".into();
            return Ok((trace, context));
        }
        let round_seed = rng::derive_seed(seed, "round", round as u64);
        let ranking = context.rank_candidates(&pool, round_seed)?;
        let Some(best) = ranking.best() else {
            trace.stop_reason = format!("round {round}: every candidate failed");
            return Ok((trace, context));
        };
        let est = best.estimate.as_ref().expect("best has an estimate");
        let reduction = best.predicted_reduction.unwrap_or(0.0);
        let chosen = pool.remove(best.declaration_index);
        let predicted_value = est.value;
        let before = context.deviation.value;
        let data = match source.acquire(&chosen) {
            Ok(d) => d,
            Err(e) => {
                trace.stop_reason = format!("round {round}: data acquisition for '{}' failed: {e}", chosen.name);
                return Ok((trace, context));
            }
        };
        context = context.extend(&chosen, &data, round_seed)?;
        let after = context.deviation.value;
        log::info!(
            "round {round}: chose '{}' (predicted {predicted_value:.4}), deviation {before:.4} -> {after:.4}",
            chosen.name
        );
        trace.rounds.push(DesignRound {
            round,
            ranking,
            chosen: chosen.name.clone(),
            predicted_value,
            predicted_reduction: reduction,
            deviation_before: before,
            deviation_after: after,
            change: after - before,
            z_upper_after: context.z_upper(),
            theta_star_after: context.fit.theta_star.clone(),
        });
        if reduction < context.settings.stop_threshold {
            quiet += 1;
            if quiet >= context.settings.stop_patience {
                trace.stop_reason = format!(
                    "predicted reduction below {:.0}% for {quiet} consecutive rounds",
                    100.0 * context.settings.stop_threshold
                );
                return Ok((trace, context));
            }
        } else {
            quiet = 0;
        }
    }
    trace.stop_reason = format!("completed {rounds} rounds");
    Ok((trace, context))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_ratio_and_chi2() {
        assert_eq!(eta_default(10.0, 5, 10).unwrap(), 5.0);
        assert_eq!(eta_default(10.0, 0, 10).unwrap(), 0.0);
        assert!(eta_default(10.0, 5, 0).is_err());
        let chi = eta_chi2(3, 0.05).unwrap();
        assert!((chi - 7.814727903251178).abs() < 1e-6, "{chi}");
        let rule = EtaRule { multiplier: 4.0, ..Default::default() };
        assert_eq!(rule.resolve(10.0, 5, 10).unwrap(), 20.0);
        let fixed = EtaRule { mode: EtaMode::Fixed, value: Some(2.5), ..Default::default() };
        assert_eq!(fixed.resolve(10.0, 5, 10).unwrap(), 2.5);
    }

    #[test]
    fn merging_experiments() {
        use crate::estimation::Observable;
        use crate::ode::ExternalFactors;
        let obs = Observable { name: "x".into(), weights: vec![1.0] };
        let mut list = vec![Experiment::new(ExternalFactors::new("a")).measure(obs.clone(), vec![1.0, 2.0])];
        merge_experiment(&mut list, &Experiment::new(ExternalFactors::new("a")).measure(obs.clone(), vec![2.0, 3.0]));
        merge_experiment(&mut list, &Experiment::new(ExternalFactors::new("b")).measure(obs, vec![1.0]));
        assert_eq!(list.len(), 2);
        assert_eq!(list[0].measurements[0].times, vec![1.0, 2.0, 3.0]);
    }
}
