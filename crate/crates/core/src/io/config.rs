use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design::{CandidateExperiment, DesignSettings, EtaRule};
use crate::deviation::{DeviationOptions, PredictionProblem};
use crate::error::{Error, Result};
use crate::estimation::{BootstrapOptions, Experiment, FitOptions};
use crate::models::{lookup, ExprModel, InlineModel, ModelDescriptor, NoiseSpec, Pinned};
use crate::ode::{ExternalFactors, ModelSystem, Tolerances};
use crate::optim::{BarrierOptions, NewtonCgOptions, ParamRange, ParamSpace};

/// Pipeline stages, run in this order when requested.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Simulate,
    Fit,
    Deviate,
    Impact,
    Rank,
    Sequence,
    Validate,
}

/// A scenario: model, experiments, prediction problems, candidates, data
/// source and solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<ConditionConfig>,
    pub experiments: Vec<ExperimentConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predictions: Vec<PredictionConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateConfig>,
    pub data: DataConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub bootstrap: BootstrapOptions,
    #[serde(default)]
    pub eta: EtaRule,
    #[serde(default)]
    pub sequence: SequenceConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
}

fn default_stages() -> Vec<Stage> {
    vec![Stage::Fit, Stage::Deviate]
}

/// Registry model or inline equations, optionally with parameters pinned.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<InlineModel>,
    /// Parameters held at the given values during estimation.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fixed: BTreeMap<String, f64>,
    /// Reference parameters (free ones only); required for inline models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    /// Search box per free parameter; required for inline models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<ParamRange>>,
}

/// Constant external factors under one condition id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConfig {
    pub id: String,
    pub factors: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

/// An observable and its time points, listed and/or on a regular grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserveConfig {
    pub observable: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
}

impl ObserveConfig {
    fn resolve_times(&self) -> Result<Vec<f64>> {
        let mut times = self.times.clone();
        if let Some(g) = self.grid {
            if !(g.step > 0.0 && g.end >= g.start) {
                return Err(Error::Config(format!("bad time grid for '{}'", self.observable)));
            }
            times.extend(crate::validation::grid(g.start, g.end, g.step));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        if times.is_empty() {
            return Err(Error::Config(format!("observable '{}' has no time points", self.observable)));
        }
        Ok(times)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub condition: String,
    pub observe: Vec<ObserveConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionConfig {
    pub condition: String,
    pub observe: Vec<ObserveConfig>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scales: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateConfig {
    pub name: String,
    pub condition: String,
    pub observe: Vec<ObserveConfig>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scales: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

fn one() -> usize {
    1
}

/// Observations from a file, or simulated from known parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    /// Defaults to the model's reference parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    pub noise: NoiseSpec,
    #[serde(default = "one")]
    pub replicates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub fit_restarts: usize,
    pub deviation_restarts: usize,
    pub walk_steps: usize,
    pub newton: NewtonCgOptions,
    pub barrier: BarrierOptions,
    pub fitting_tolerances: Tolerances,
    pub barrier_tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_floor: Option<f64>,
    pub flag_ratio: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            fit_restarts: 20,
            deviation_restarts: 20,
            walk_steps: 100,
            newton: NewtonCgOptions::default(),
            barrier: BarrierOptions::default(),
            fitting_tolerances: Tolerances::fitting(),
            barrier_tolerances: Tolerances::barrier(),
            variance_floor: None,
            flag_ratio: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceConfig {
    pub rounds: usize,
    /// Stop once the best predicted relative reduction stays below this
    /// for `patience` consecutive rounds.
    pub stop_threshold: f64,
    pub patience: usize,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self { rounds: 3, stop_threshold: 0.02, patience: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Grid check of the centered-interval property for the normal,
    /// uniform and Student-t noise families.
    pub lemma1: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposition: Option<PropositionConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordering: Option<OrderingConfig>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self { lemma1: true, coverage: None, proposition: None, ordering: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub trials: usize,
    /// Restart counts for the per-trial solves; default to the solver's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_restarts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation_restarts: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropositionConfig {
    /// Candidate whose simulated data define the closeness constraint.
    pub candidate: String,
    pub pairs: usize,
    /// Defaults to the χ² quantile for the candidate's observation count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderingConfig {
    pub trials: usize,
    pub thresholds: Vec<f64>,
}

/// Everything a scenario refers to, built and checked.
#[derive(Clone)]
pub struct Scenario {
    pub descriptor: ModelDescriptor,
    pub experiments: Vec<Experiment>,
    pub problems: Vec<PredictionProblem>,
    pub candidates: Vec<CandidateExperiment>,
    pub theta_true: Option<Vec<f64>>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("model", &self.descriptor.name)
            .field("experiments", &self.experiments)
            .field("problems", &self.problems)
            .field("candidates", &self.candidates)
            .finish_non_exhaustive()
    }
}

impl Scenario {
    pub fn model(&self) -> &dyn ModelSystem {
        self.descriptor.system.as_ref()
    }
}

const BUILTIN: [(&str, &str); 4] = [
    ("lorenz", include_str!("../../scenarios/lorenz.toml")),
    ("lotka_volterra", include_str!("../../scenarios/lotka_volterra.toml")),
    ("hiv", include_str!("../../scenarios/hiv.toml")),
    ("decay", include_str!("../../scenarios/decay.toml")),
];

/// Names accepted by [`builtin_scenario`].
pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown scenario '{name}'; built-in: {}", builtin_names().join(", "))))?;
    ScenarioConfig::from_toml(text)
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Read a config file; a relative data path is resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config '{}': {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(file) = &cfg.data.file {
            if file.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data.file = Some(base.join(file));
            }
        }
        Ok(cfg)
    }

    fn descriptor(&self) -> Result<ModelDescriptor> {
        let m = &self.model;
        let mut d = match (&m.name, &m.inline) {
            (Some(name), None) => lookup(name)?,
            (None, Some(inline)) => {
                let system = ExprModel::new(inline.clone())?;
                let (Some(theta), Some(bounds)) = (&m.theta, &m.bounds) else {
                    return Err(Error::Config("inline models need 'theta' and 'bounds'".into()));
                };
                let p = system.param_dim();
                if theta.len() != p || bounds.len() != p {
                    return Err(Error::Config(format!("inline model has {p} parameters; theta and bounds must match")));
                }
                ModelDescriptor {
                    name: "inline".into(),
                    system: Arc::new(system),
                    default_theta: theta.clone(),
                    default_factors: Vec::new(),
                    parameter_space: ParamSpace::new(bounds.clone())?,
                    documentation: inline.rhs.join("; "),
                }
            }
            _ => return Err(Error::Config("model needs exactly one of 'name' or 'inline'".into())),
        };
        if !m.fixed.is_empty() {
            let names = d.system.param_names().to_vec();
            let fixed: Vec<(String, f64)> = m.fixed.iter().map(|(k, v)| (k.clone(), *v)).collect();
            let pinned = Pinned::new(d.system.clone(), &fixed)?;
            let keep: Vec<usize> = (0..names.len()).filter(|&i| !m.fixed.contains_key(&names[i])).collect();
            d.default_theta = keep.iter().map(|&i| d.default_theta[i]).collect();
            d.parameter_space = ParamSpace { ranges: keep.iter().map(|&i| d.parameter_space.ranges[i]).collect() };
            d.system = Arc::new(pinned);
        }
        if m.name.is_some() {
            if let Some(theta) = &m.theta {
                d.default_theta = theta.clone();
            }
            if let Some(bounds) = &m.bounds {
                d.parameter_space = ParamSpace::new(bounds.clone())?;
            }
        }
        if d.default_theta.len() != d.system.param_dim() || d.parameter_space.dim() != d.system.param_dim() {
            return Err(Error::Config(format!(
                "model has {} free parameters; theta and bounds must match",
                d.system.param_dim()
            )));
        }
        Ok(d)
    }

    fn factors(&self, d: &ModelDescriptor, id: &str) -> Result<ExternalFactors> {
        if let Some(c) = self.conditions.iter().find(|c| c.id == id) {
            let mut f = ExternalFactors::new(id);
            for (k, v) in &c.factors {
                f = f.with(k.clone(), *v);
            }
            return Ok(f);
        }
        d.factors(id).cloned()
    }

    fn experiment(&self, d: &ModelDescriptor, condition: &str, observe: &[ObserveConfig]) -> Result<Experiment> {
        if observe.is_empty() {
            return Err(Error::Config(format!("nothing observed under condition '{condition}'")));
        }
        let mut e = Experiment::new(self.factors(d, condition)?);
        for o in observe {
            e = e.measure(d.observable(&o.observable)?, o.resolve_times()?);
        }
        e.validate(d.system.as_ref())?;
        Ok(e)
    }

    /// Build the model, experiments, problems and candidates.
    pub fn resolve(&self) -> Result<Scenario> {
        let mut ids = BTreeSet::new();
        for c in &self.conditions {
            if !ids.insert(c.id.as_str()) {
                return Err(Error::Config(format!("condition id '{}' is defined twice", c.id)));
            }
        }
        let mut names = BTreeSet::new();
        for c in &self.candidates {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Config(format!("candidate name '{}' is used twice", c.name)));
            }
        }
        if self.experiments.is_empty() {
            return Err(Error::Config("at least one experiment is required".into()));
        }
        let descriptor = self.descriptor()?;
        let experiments = self
            .experiments
            .iter()
            .map(|e| self.experiment(&descriptor, &e.condition, &e.observe))
            .collect::<Result<Vec<_>>>()?;
        let problems = self
            .predictions
            .iter()
            .map(|p| {
                Ok(PredictionProblem {
                    experiment: self.experiment(&descriptor, &p.condition, &p.observe)?,
                    scales: p.scales.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let candidates = self
            .candidates
            .iter()
            .map(|c| {
                Ok(CandidateExperiment {
                    name: c.name.clone(),
                    experiment: self.experiment(&descriptor, &c.condition, &c.observe)?,
                    replicates: c.replicates,
                    scales: c.scales.clone(),
                    eta: c.eta,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let theta_true =
            self.data.truth.as_ref().map(|t| t.theta.clone().unwrap_or_else(|| descriptor.default_theta.clone()));
        if let Some(t) = &theta_true {
            if t.len() != descriptor.system.param_dim() {
                return Err(Error::Config(format!(
                    "truth has {} parameters, model has {}",
                    t.len(),
                    descriptor.system.param_dim()
                )));
            }
        }
        match (&self.data.file, &self.data.truth) {
            (None, None) => return Err(Error::Config("data needs a 'file' or a 'truth' section".into())),
            (Some(_), Some(_)) => return Err(Error::Config("data takes either 'file' or 'truth', not both".into())),
            _ => {}
        }
        Ok(Scenario { descriptor, experiments, problems, candidates, theta_true })
    }

    pub fn fit_options(&self, scenario: &Scenario) -> FitOptions {
        let mut o = FitOptions::new(scenario.descriptor.parameter_space.clone());
        o.restarts = self.solver.fit_restarts;
        o.newton = self.solver.newton.clone();
        o.tolerances = self.solver.fitting_tolerances;
        o
    }

    pub fn deviation_options(&self, scenario: &Scenario) -> DeviationOptions {
        let mut o = DeviationOptions::new(scenario.descriptor.parameter_space.clone());
        o.restarts = self.solver.deviation_restarts;
        o.walk_steps = self.solver.walk_steps;
        o.barrier = self.solver.barrier.clone();
        o.barrier_tolerances = self.solver.barrier_tolerances;
        o.final_tolerances = self.solver.fitting_tolerances;
        o
    }

    pub fn design_settings(&self, scenario: &Scenario) -> DesignSettings {
        let mut s = DesignSettings::new(self.fit_options(scenario), self.deviation_options(scenario));
        s.bootstrap = self.bootstrap.clone();
        s.eta = self.eta;
        s.flag_ratio = self.solver.flag_ratio;
        s.stop_threshold = self.sequence.stop_threshold;
        s.stop_patience = self.sequence.patience;
        s.variance_floor = self.solver.variance_floor;
        s
    }
}

/// Command-line overrides of config values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
    pub alpha: Option<f64>,
    pub bootstrap_samples: Option<usize>,
    pub eta_mode: Option<crate::design::EtaMode>,
    pub eta_value: Option<f64>,
    pub eta_multiplier: Option<f64>,
}

impl ScenarioConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.restarts {
            self.solver.fit_restarts = r;
            self.solver.deviation_restarts = r;
        }
        if let Some(a) = o.alpha {
            self.bootstrap.alpha = a;
            self.eta.alpha = a;
        }
        if let Some(b) = o.bootstrap_samples {
            self.bootstrap.samples = b;
        }
        if let Some(m) = o.eta_mode {
            self.eta.mode = m;
        }
        if let Some(v) = o.eta_value {
            self.eta.value = Some(v);
        }
        if let Some(m) = o.eta_multiplier {
            self.eta.multiplier = m;
        }
    }
}
