//! Experiments, observed data, weighted least-squares fit error, best-fit
//! estimation with random restarts, and the bootstrap interval for the
//! best-fit error.

mod bootstrap;
mod fit;
mod noise;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{Conditions, FitLayout};
use crate::ode::{ExternalFactors, ModelSystem, Tolerances};

pub use bootstrap::{bootstrap_interval, percentile_bounds, BootstrapMode, BootstrapOptions, FitInterval};
pub use fit::{fit, FitOptions, FitResult, RestartRecord};
pub use noise::{estimate_noise, sample_variance, NoiseEstimate};

/// A named linear map of the state, e.g. `C+CI`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub name: String,
    pub weights: Vec<f64>,
}

impl Observable {
    /// The `i`-th state component.
    pub fn state(names: &[String], i: usize) -> Self {
        let mut weights = vec![0.0; names.len()];
        weights[i] = 1.0;
        Self { name: names[i].clone(), weights }
    }

    /// Parse a linear combination of state names, e.g. `C+CI`, `x`,
    /// `2*CH - 0.5*H`. The original text (whitespace removed) becomes the name.
    pub fn parse(text: &str, state_names: &[String]) -> Result<Self> {
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(Error::InvalidInput("empty observable".into()));
        }
        let mut weights = vec![0.0; state_names.len()];
        let mut rest = compact.as_str();
        let mut first = true;
        while !rest.is_empty() {
            let mut sign = 1.0;
            if let Some(r) = rest.strip_prefix('+') {
                rest = r;
            } else if let Some(r) = rest.strip_prefix('-') {
                sign = -1.0;
                rest = r;
            } else if !first {
                return Err(Error::InvalidInput(format!("malformed observable '{text}'")));
            }
            first = false;
            let end = rest.find(['+', '-']).unwrap_or(rest.len());
            let (term, tail) = rest.split_at(end);
            rest = tail;
            let (coef, name) = match term.split_once('*') {
                Some((c, n)) => (
                    c.parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("bad coefficient '{c}' in observable '{text}'")))?,
                    n,
                ),
                None => (1.0, term),
            };
            let idx = state_names
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown state '{name}' in observable '{text}'")))?;
            weights[idx] += sign * coef;
        }
        Ok(Self { name: compact, weights })
    }

    #[inline]
    pub fn apply(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }
}

/// One observable measured on a time set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub observable: Observable,
    pub times: Vec<f64>,
}

/// What was (or would be) measured under one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub factors: ExternalFactors,
    pub measurements: Vec<Measurement>,
}

impl Experiment {
    pub fn new(factors: ExternalFactors) -> Self {
        Self { factors, measurements: Vec::new() }
    }

    pub fn measure(mut self, observable: Observable, times: Vec<f64>) -> Self {
        self.measurements.push(Measurement { observable, times });
        self
    }

    pub fn condition_id(&self) -> &str {
        &self.factors.condition_id
    }

    /// Short label like `C+CI@I=0.002`.
    pub fn label(&self) -> String {
        let obs: Vec<&str> = self.measurements.iter().map(|m| m.observable.name.as_str()).collect();
        format!("{}@{}", obs.join(","), self.factors.condition_id)
    }

    /// Number of scheduled time points (without replicates).
    pub fn slot_count(&self) -> usize {
        self.measurements.iter().map(|m| m.times.len()).sum()
    }

    pub fn validate(&self, model: &dyn ModelSystem) -> Result<()> {
        self.factors.validate_for(model)?;
        if self.measurements.is_empty() {
            return Err(Error::InvalidInput(format!("experiment '{}' has no measurements", self.label())));
        }
        for m in &self.measurements {
            if m.observable.weights.len() != model.state_dim() {
                return Err(Error::InvalidInput(format!(
                    "observable '{}' has {} weights for a {}-state model",
                    m.observable.name,
                    m.observable.weights.len(),
                    model.state_dim()
                )));
            }
            if m.times.is_empty() {
                return Err(Error::InvalidInput(format!("observable '{}' has an empty time set", m.observable.name)));
            }
            if m.times.windows(2).any(|w| w[1] <= w[0]) || m.times.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "times for '{}' must be ascending and non-negative",
                    m.observable.name
                )));
            }
        }
        Ok(())
    }
}

/// Conditions with the same id must carry identical factors.
pub(crate) fn check_condition_consistency<'a>(factors: impl IntoIterator<Item = &'a ExternalFactors>) -> Result<()> {
    let mut seen: Vec<&ExternalFactors> = Vec::new();
    for f in factors {
        if let Some(prev) = seen.iter().find(|p| p.condition_id == f.condition_id) {
            if prev.entries != f.entries {
                return Err(Error::InvalidInput(format!(
                    "condition '{}' is declared with different factors",
                    f.condition_id
                )));
            }
        } else {
            seen.push(f);
        }
    }
    Ok(())
}

/// Observed replicates of one observable under one condition.
///
/// `replicates[k]` holds the values observed at `times[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub condition_id: String,
    pub observable: String,
    pub times: Vec<f64>,
    pub replicates: Vec<Vec<f64>>,
    /// Noise variance σ², constant over time.
    pub variance: Option<f64>,
}

impl Series {
    pub fn observation_count(&self) -> usize {
        self.replicates.iter().map(Vec::len).sum()
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

/// All observed data, grouped into per-(observable, condition) series.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub series: Vec<Series>,
}

impl Dataset {
    pub fn find(&self, condition_id: &str, observable: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.condition_id == condition_id && s.observable == observable)
    }

    pub fn find_mut(&mut self, condition_id: &str, observable: &str) -> Option<&mut Series> {
        self.series.iter_mut().find(|s| s.condition_id == condition_id && s.observable == observable)
    }

    pub fn observation_count(&self) -> usize {
        self.series.iter().map(Series::observation_count).sum()
    }

    /// Observations covered by `experiments` (replicates counted).
    pub fn observation_count_for(&self, experiments: &[Experiment]) -> usize {
        let mut count = 0;
        for e in experiments {
            for m in &e.measurements {
                if let Some(s) = self.find(e.condition_id(), &m.observable.name) {
                    for &t in &m.times {
                        if let Some(k) = s.time_index(t) {
                            count += s.replicates[k].len();
                        }
                    }
                }
            }
        }
        count
    }

    /// Only the cells measured by `experiments`.
    pub fn subset(&self, experiments: &[Experiment]) -> Dataset {
        let mut out = Dataset::default();
        for e in experiments {
            for m in &e.measurements {
                let Some(s) = self.find(e.condition_id(), &m.observable.name) else { continue };
                for &t in &m.times {
                    if let Some(k) = s.time_index(t) {
                        for &v in &s.replicates[k] {
                            out.push(&s.condition_id, &s.observable, s.times[k], v);
                        }
                    }
                }
                if let Some(target) = out.find_mut(e.condition_id(), &m.observable.name) {
                    target.variance = s.variance;
                }
            }
        }
        out
    }

    /// Add one observation, creating the series or time point as needed.
    pub fn push(&mut self, condition_id: &str, observable: &str, time: f64, value: f64) {
        if self.find(condition_id, observable).is_none() {
            self.series.push(Series {
                condition_id: condition_id.to_string(),
                observable: observable.to_string(),
                times: Vec::new(),
                replicates: Vec::new(),
                variance: None,
            });
        }
        let s = self.find_mut(condition_id, observable).expect("series just inserted");
        match s.time_index(time) {
            Some(k) => s.replicates[k].push(value),
            None => {
                let pos = s.times.partition_point(|&u| u < time);
                s.times.insert(pos, time);
                s.replicates.insert(pos, vec![value]);
            }
        }
    }

    /// Append every series of `other`. Existing series gain the new time
    /// points and replicates; a variance on either side is kept.
    pub fn merge(&mut self, other: &Dataset) {
        for s in &other.series {
            for (k, &t) in s.times.iter().enumerate() {
                for &v in &s.replicates[k] {
                    self.push(&s.condition_id, &s.observable, t, v);
                }
            }
            let target = self.find_mut(&s.condition_id, &s.observable).expect("merged series exists");
            if target.variance.is_none() {
                target.variance = s.variance;
            }
        }
    }

    /// Fill missing variances from replicates. Cells with too few replicates
    /// or zero spread are errors; `floor`, when given, lifts estimates below
    /// it instead of rejecting them.
    pub fn estimate_missing_variances(&mut self, floor: Option<f64>) -> Result<()> {
        for s in &mut self.series {
            if s.variance.is_none() {
                s.variance = Some(noise::series_variance(s, floor)?);
            }
        }
        Ok(())
    }

    /// σ for an observable: the mean variance over conditions where it was
    /// observed. Used as a default deviation scale.
    pub fn default_sigma(&self, observable: &str) -> Option<f64> {
        let vars: Vec<f64> =
            self.series.iter().filter(|s| s.observable == observable).filter_map(|s| s.variance).collect();
        if vars.is_empty() {
            None
        } else {
            Some((vars.iter().sum::<f64>() / vars.len() as f64).sqrt())
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.series.is_empty() || self.observation_count() == 0 {
            return Err(Error::Data("no observations".into()));
        }
        for s in &self.series {
            if s.times.len() != s.replicates.len() {
                return Err(Error::Data(format!("series ({}, {}) is malformed", s.observable, s.condition_id)));
            }
            if s.replicates.iter().any(|r| r.is_empty() || r.iter().any(|v| !v.is_finite())) {
                return Err(Error::Data(format!(
                    "series ({}, {}) has empty or non-finite cells",
                    s.observable, s.condition_id
                )));
            }
            if let Some(v) = s.variance {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Noise {
                        observable: s.observable.clone(),
                        condition: s.condition_id.clone(),
                        reason: format!("variance must be positive, got {v}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Weighted least-squares fit error of `theta` on the observed data,
/// replicates counted as separate terms. Returns `+∞` when integration fails.
pub fn z_fit(
    model: &dyn ModelSystem,
    theta: &[f64],
    experiments: &[Experiment],
    dataset: &Dataset,
    tol: &Tolerances,
) -> Result<f64> {
    let conditions = Conditions::from_experiments(experiments)?;
    let layout = FitLayout::new(model, experiments, dataset, &conditions)?;
    Ok(match conditions.simulate(model, theta, false, tol) {
        Some(tr) => layout.value(&tr),
        None => f64::INFINITY,
    })
}

/// Fit error and its gradient in θ from forward sensitivities. `None` when
/// the model fails to integrate.
pub fn z_fit_gradient(
    model: &dyn ModelSystem,
    theta: &[f64],
    experiments: &[Experiment],
    dataset: &Dataset,
    tol: &Tolerances,
) -> Result<Option<(f64, Vec<f64>)>> {
    let conditions = Conditions::from_experiments(experiments)?;
    let layout = FitLayout::new(model, experiments, dataset, &conditions)?;
    Ok(conditions.simulate(model, theta, true, tol).map(|tr| {
        let d = layout.derivatives(&tr);
        (d.value, d.gradient)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parse_observables() {
        let st = names(&["C", "CI", "CH", "CHI", "H"]);
        let o = Observable::parse("C + CI", &st).unwrap();
        assert_eq!(o.name, "C+CI");
        assert_eq!(o.weights, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
        let o = Observable::parse("2*CH-0.5*H", &st).unwrap();
        assert_eq!(o.weights, vec![0.0, 0.0, 2.0, 0.0, -0.5]);
        assert!(Observable::parse("Q", &st).is_err());
        assert!(Observable::parse("", &st).is_err());
        assert!(Observable::parse("x*C", &st).is_err());
    }

    #[test]
    fn dataset_push_and_merge() {
        let mut d = Dataset::default();
        d.push("a", "x", 2.0, 1.0);
        d.push("a", "x", 1.0, 0.5);
        d.push("a", "x", 2.0, 1.5);
        let s = d.find("a", "x").unwrap();
        assert_eq!(s.times, vec![1.0, 2.0]);
        assert_eq!(s.replicates, vec![vec![0.5], vec![1.0, 1.5]]);
        let mut e = Dataset::default();
        e.push("b", "x", 1.0, 3.0);
        e.push("a", "x", 3.0, 4.0);
        d.merge(&e);
        assert_eq!(d.observation_count(), 5);
        assert_eq!(d.find("a", "x").unwrap().times, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(Dataset::default().validate(), Err(Error::Data(m)) if m.contains("no observations")));
    }

    #[test]
    fn condition_consistency() {
        let a = ExternalFactors::new("c").with("I", 1.0);
        let b = ExternalFactors::new("c").with("I", 2.0);
        assert!(check_condition_consistency([&a, &a]).is_ok());
        assert!(check_condition_consistency([&a, &b]).is_err());
    }
}
