//! Residual layouts shared by the fit error and the deviation objective.
//!
//! Every distinct condition is integrated once per parameter vector on the
//! union of all time points that any layout needs, so the fit error on `P`,
//! the deviation on `Y` and the candidate deviation on `P′` share
//! trajectories whenever they share a condition.

use crate::error::{Error, Result};
use crate::estimation::{check_condition_consistency, Dataset, Experiment};
use crate::ode::{integrate, integrate_with_sensitivities, ExternalFactors, ModelSystem, Tolerances, Trajectory};

#[derive(Clone, Debug)]
pub(crate) struct ConditionGrid {
    pub factors: ExternalFactors,
    pub times: Vec<f64>,
}

/// Distinct conditions with their merged time grids.
#[derive(Clone, Debug, Default)]
pub(crate) struct Conditions {
    pub grids: Vec<ConditionGrid>,
}

impl Conditions {
    pub fn new<'a>(requests: impl IntoIterator<Item = (&'a ExternalFactors, &'a [f64])>) -> Result<Self> {
        let mut grids: Vec<ConditionGrid> = Vec::new();
        let requests: Vec<_> = requests.into_iter().collect();
        check_condition_consistency(requests.iter().map(|(f, _)| *f))?;
        for (factors, times) in requests {
            let grid = match grids.iter_mut().find(|g| g.factors.condition_id == factors.condition_id) {
                Some(g) => g,
                None => {
                    grids.push(ConditionGrid { factors: factors.clone(), times: Vec::new() });
                    grids.last_mut().expect("just pushed")
                }
            };
            grid.times.extend_from_slice(times);
        }
        for g in &mut grids {
            g.times.sort_by(f64::total_cmp);
            g.times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        Ok(Self { grids })
    }

    pub fn from_experiments<'a>(experiments: impl IntoIterator<Item = &'a Experiment>) -> Result<Self> {
        Self::new(
            experiments.into_iter().flat_map(|e| e.measurements.iter().map(move |m| (&e.factors, m.times.as_slice()))),
        )
    }

    fn locate(&self, condition_id: &str, t: f64) -> (usize, usize) {
        let c = self
            .grids
            .iter()
            .position(|g| g.factors.condition_id == condition_id)
            .expect("condition registered before layout construction");
        let times = &self.grids[c].times;
        let k = times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .expect("time registered before layout construction");
        (c, k)
    }

    /// Integrate every condition. `None` when any integration fails.
    pub fn simulate(
        &self,
        model: &dyn ModelSystem,
        theta: &[f64],
        sensitivities: bool,
        tol: &Tolerances,
    ) -> Option<Vec<Trajectory>> {
        let mut out = Vec::with_capacity(self.grids.len());
        for g in &self.grids {
            let tr = if sensitivities {
                integrate_with_sensitivities(model, theta, &g.factors, &g.times, tol)
            } else {
                integrate(model, theta, &g.factors, &g.times, tol)
            }
            .ok()?;
            if !tr.is_ok() {
                return None;
            }
            out.push(tr);
        }
        Some(out)
    }
}

#[inline]
fn predict(weights: &[f64], tr: &Trajectory, k: usize) -> f64 {
    weights.iter().zip(tr.state(k)).map(|(w, x)| w * x).sum()
}

fn predict_grad(weights: &[f64], tr: &Trajectory, k: usize, out: &mut [f64]) {
    let p = tr.param_dim;
    out.fill(0.0);
    let s = tr.sensitivity(k).expect("sensitivities requested");
    for (i, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            for (o, v) in out.iter_mut().zip(&s[i * p..(i + 1) * p]) {
                *o += w * v;
            }
        }
    }
}

/// `out += scale * a bᵀ` on a row-major block with row stride `stride`.
#[inline]
fn outer_add(out: &mut [f64], stride: usize, row0: usize, col0: usize, a: &[f64], b: &[f64], scale: f64) {
    for (i, &ai) in a.iter().enumerate() {
        let row = &mut out[(row0 + i) * stride + col0..(row0 + i) * stride + col0 + b.len()];
        for (r, &bj) in row.iter_mut().zip(b) {
            *r += scale * ai * bj;
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FitTerm {
    pub cond: usize,
    pub k: usize,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub inv_var: f64,
    /// Index of the originating (observable, condition) series.
    pub series: usize,
}

/// Weighted least-squares terms for observed experiments.
#[derive(Clone, Debug)]
pub(crate) struct FitLayout {
    pub terms: Vec<FitTerm>,
    pub param_dim: usize,
}

/// Gradient and Gauss–Newton curvature of a scalar objective.
#[derive(Clone, Debug)]
pub(crate) struct Derivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major `dim × dim`.
    pub curvature: Vec<f64>,
}

impl FitLayout {
    pub fn new(
        model: &dyn ModelSystem,
        experiments: &[Experiment],
        dataset: &Dataset,
        conditions: &Conditions,
    ) -> Result<Self> {
        let mut terms = Vec::new();
        for e in experiments {
            e.validate(model)?;
            for m in &e.measurements {
                let series_idx = dataset
                    .series
                    .iter()
                    .position(|s| s.condition_id == e.condition_id() && s.observable == m.observable.name)
                    .ok_or_else(|| {
                        Error::Data(format!(
                            "no data for observable '{}' under condition '{}'",
                            m.observable.name,
                            e.condition_id()
                        ))
                    })?;
                let series = &dataset.series[series_idx];
                let var = series.variance.ok_or_else(|| Error::Noise {
                    observable: series.observable.clone(),
                    condition: series.condition_id.clone(),
                    reason: "variance not estimated or supplied".into(),
                })?;
                if !(var > 0.0) {
                    return Err(Error::Noise {
                        observable: series.observable.clone(),
                        condition: series.condition_id.clone(),
                        reason: format!("variance must be positive, got {var}"),
                    });
                }
                for &t in &m.times {
                    let ks = series.time_index(t).ok_or_else(|| {
                        Error::Data(format!(
                            "no observation of '{}' at t = {t} under condition '{}'",
                            m.observable.name,
                            e.condition_id()
                        ))
                    })?;
                    let (cond, k) = conditions.locate(e.condition_id(), t);
                    terms.push(FitTerm {
                        cond,
                        k,
                        weights: m.observable.weights.clone(),
                        values: series.replicates[ks].clone(),
                        inv_var: 1.0 / var,
                        series: series_idx,
                    });
                }
            }
        }
        Ok(Self { terms, param_dim: model.param_dim() })
    }

    pub fn value(&self, trajs: &[Trajectory]) -> f64 {
        let mut z = 0.0;
        for t in &self.terms {
            let pred = predict(&t.weights, &trajs[t.cond], t.k);
            for v in &t.values {
                z += (pred - v).powi(2) * t.inv_var;
            }
        }
        z
    }

    pub fn derivatives(&self, trajs: &[Trajectory]) -> Derivatives {
        let p = self.param_dim;
        let mut value = 0.0;
        let mut gradient = vec![0.0; p];
        let mut curvature = vec![0.0; p * p];
        let mut dp = vec![0.0; p];
        for t in &self.terms {
            let tr = &trajs[t.cond];
            let pred = predict(&t.weights, tr, t.k);
            predict_grad(&t.weights, tr, t.k, &mut dp);
            let mut rsum = 0.0;
            for v in &t.values {
                let r = pred - v;
                value += r * r * t.inv_var;
                rsum += r;
            }
            for (g, d) in gradient.iter_mut().zip(&dp) {
                *g += 2.0 * t.inv_var * rsum * d;
            }
            outer_add(&mut curvature, p, 0, 0, &dp, &dp, 2.0 * t.inv_var * t.values.len() as f64);
        }
        Derivatives { value, gradient, curvature }
    }

    /// Model predictions at every term (for residuals and plotting).
    pub fn predictions(&self, trajs: &[Trajectory]) -> Vec<f64> {
        self.terms.iter().map(|t| predict(&t.weights, &trajs[t.cond], t.k)).collect()
    }

    /// Same design with different observed values.
    pub fn with_values(&self, values: Vec<Vec<f64>>) -> Self {
        let terms = self.terms.iter().zip(values).map(|(t, v)| FitTerm { values: v, ..t.clone() }).collect();
        Self { terms, param_dim: self.param_dim }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DevTerm {
    pub cond: usize,
    pub k: usize,
    pub weights: Vec<f64>,
    /// multiplicity / σ²
    pub weight: f64,
    pub label: (String, String, f64),
}

/// Squared-difference terms between two parameter vectors.
#[derive(Clone, Debug, Default)]
pub(crate) struct DevLayout {
    pub terms: Vec<DevTerm>,
    pub param_dim: usize,
}

impl DevLayout {
    /// `scale(observable)` returns `(σ, multiplicity)` for each measurement.
    pub fn new(
        model: &dyn ModelSystem,
        designs: &[&Experiment],
        conditions: &Conditions,
        scale: impl Fn(&Experiment, &str) -> Result<(f64, f64)>,
    ) -> Result<Self> {
        let mut terms = Vec::new();
        for e in designs {
            e.validate(model)?;
            for m in &e.measurements {
                let (sigma, mult) = scale(e, &m.observable.name)?;
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "deviation scale for '{}' must be positive",
                        m.observable.name
                    )));
                }
                for &t in &m.times {
                    let (cond, k) = conditions.locate(e.condition_id(), t);
                    terms.push(DevTerm {
                        cond,
                        k,
                        weights: m.observable.weights.clone(),
                        weight: mult / (sigma * sigma),
                        label: (e.condition_id().to_string(), m.observable.name.clone(), t),
                    });
                }
            }
        }
        Ok(Self { terms, param_dim: model.param_dim() })
    }

    pub fn value(&self, a: &[Trajectory], b: &[Trajectory]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let d = predict(&t.weights, &a[t.cond], t.k) - predict(&t.weights, &b[t.cond], t.k);
                t.weight * d * d
            })
            .sum()
    }

    /// Derivatives with respect to the stacked vector `(θ¹, θ²)`.
    pub fn derivatives(&self, a: &[Trajectory], b: &[Trajectory]) -> Derivatives {
        let p = self.param_dim;
        let dim = 2 * p;
        let mut value = 0.0;
        let mut gradient = vec![0.0; dim];
        let mut curvature = vec![0.0; dim * dim];
        let mut da = vec![0.0; p];
        let mut db = vec![0.0; p];
        for t in &self.terms {
            let d = predict(&t.weights, &a[t.cond], t.k) - predict(&t.weights, &b[t.cond], t.k);
            predict_grad(&t.weights, &a[t.cond], t.k, &mut da);
            predict_grad(&t.weights, &b[t.cond], t.k, &mut db);
            value += t.weight * d * d;
            for j in 0..p {
                gradient[j] += 2.0 * t.weight * d * da[j];
                gradient[p + j] -= 2.0 * t.weight * d * db[j];
            }
            let w2 = 2.0 * t.weight;
            outer_add(&mut curvature, dim, 0, 0, &da, &da, w2);
            outer_add(&mut curvature, dim, 0, p, &da, &db, -w2);
            outer_add(&mut curvature, dim, p, 0, &db, &da, -w2);
            outer_add(&mut curvature, dim, p, p, &db, &db, w2);
        }
        Derivatives { value, gradient, curvature }
    }

    /// Pointwise predictions `(label, model a, model b)`.
    pub fn traces(&self, a: &[Trajectory], b: &[Trajectory]) -> Vec<((String, String, f64), f64, f64)> {
        self.terms
            .iter()
            .map(|t| (t.label.clone(), predict(&t.weights, &a[t.cond], t.k), predict(&t.weights, &b[t.cond], t.k)))
            .collect()
    }
}
