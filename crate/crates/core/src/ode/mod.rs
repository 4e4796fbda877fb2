//! Parameterized ODE systems and their forward sensitivities.
//!
//! A [`ModelSystem`] describes `dx/dt = f(x, t; θ, ν)` together with the two
//! jacobians `∂f/∂x` and `∂f/∂θ` and an initial-state rule `x(0) = g(θ, ν)`.
//! [`integrate`] returns states on an arbitrary ascending time grid;
//! [`integrate_with_sensitivities`] additionally propagates `∂x/∂θ` by
//! integrating the variational system jointly with the state.
//!
//! Integration always starts at `t = 0`.

mod dopri;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dopri::Dopri5;

/// Right-hand side of a parameterized ODE system with analytic jacobians.
///
/// Matrices are row-major: `jacobian_state` fills `n × n` entries
/// `∂f_i/∂x_j` at `i * n + j`, `jacobian_params` fills `n × p` entries
/// `∂f_i/∂θ_k` at `i * p + k`.
pub trait ModelSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn state_names(&self) -> &[String];
    fn param_names(&self) -> &[String];
    /// Factor names that `rhs` and `initial_state` read.
    fn factor_names(&self) -> &[String];

    fn rhs(&self, t: f64, x: &[f64], theta: &[f64], nu: &ExternalFactors, dx: &mut [f64]);
    fn jacobian_state(&self, t: f64, x: &[f64], theta: &[f64], nu: &ExternalFactors, jac: &mut [f64]);
    fn jacobian_params(&self, t: f64, x: &[f64], theta: &[f64], nu: &ExternalFactors, jac: &mut [f64]);

    fn initial_state(&self, theta: &[f64], nu: &ExternalFactors, x0: &mut [f64]);

    /// `∂x(0)/∂θ`, row-major `n × p`. Zero unless a parameter is an initial
    /// condition.
    fn initial_sensitivity(&self, _theta: &[f64], _nu: &ExternalFactors, s0: &mut [f64]) {
        s0.fill(0.0);
    }
}

/// A known external factor: a constant or an exponentially decaying input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Factor {
    Constant(f64),
    Exponential { initial: f64, rate: f64 },
}

impl Factor {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Factor::Constant(v) => v,
            Factor::Exponential { initial, rate } => initial * (-rate * t).exp(),
        }
    }
}

/// The known inputs `ν` distinguishing one experimental condition from
/// another (initial states, drug levels, forcing functions).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalFactors {
    pub condition_id: String,
    #[serde(default)]
    pub entries: BTreeMap<String, Factor>,
}

impl ExternalFactors {
    pub fn new(condition_id: impl Into<String>) -> Self {
        Self { condition_id: condition_id.into(), entries: BTreeMap::new() }
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.entries.insert(name.into(), Factor::Constant(value));
        self
    }

    pub fn with_factor(mut self, name: impl Into<String>, factor: Factor) -> Self {
        self.entries.insert(name.into(), factor);
        self
    }

    /// Value of factor `name` at time `t`; NaN when absent so that a missing
    /// factor surfaces as an integration failure rather than a panic.
    #[inline]
    pub fn at(&self, name: &str, t: f64) -> f64 {
        self.entries.get(name).map_or(f64::NAN, |f| f.at(t))
    }

    #[inline]
    pub fn value(&self, name: &str) -> f64 {
        self.at(name, 0.0)
    }

    /// Check that every factor the model reads is present.
    pub fn validate_for(&self, model: &dyn ModelSystem) -> Result<()> {
        for name in model.factor_names() {
            if !self.entries.contains_key(name) {
                return Err(Error::InvalidInput(format!(
                    "condition '{}' is missing factor '{}'",
                    self.condition_id, name
                )));
            }
        }
        Ok(())
    }
}

/// Integration tolerances and step limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Tolerances {
    /// Tight tolerances for fitting-grade runs.
    pub const fn fitting() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 200_000 }
    }

    /// Looser tolerances used inside barrier iterations.
    pub const fn barrier() -> Self {
        Self { rtol: 1e-6, atol: 1e-8, max_steps: 200_000 }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::fitting()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FailureReason {
    StepUnderflow,
    NonFinite,
    MaxSteps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationFailure {
    /// Last time the solution was known to be valid.
    pub last_time: f64,
    pub reason: FailureReason,
}

/// States (and optionally sensitivities) on a time grid.
///
/// `states` is flat `k * n + i`; `sensitivities` is flat
/// `k * n * p + i * p + j`, holding `∂x_i(t_k)/∂θ_j`. Grid points past a
/// failure hold NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub state_dim: usize,
    pub param_dim: usize,
    pub states: Vec<f64>,
    pub sensitivities: Option<Vec<f64>>,
    pub failure: Option<IntegrationFailure>,
}

impl Trajectory {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    /// `∂x/∂θ` at grid point `k`, row-major `n × p`.
    pub fn sensitivity(&self, k: usize) -> Option<&[f64]> {
        let block = self.state_dim * self.param_dim;
        self.sensitivities.as_ref().map(|s| &s[k * block..(k + 1) * block])
    }

    /// One state component over the whole grid.
    pub fn component(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.state(k)[i]).collect()
    }

    pub fn into_result(self) -> Result<Self> {
        match &self.failure {
            None => Ok(self),
            Some(f) => Err(Error::Integration { time: f.last_time, reason: format!("{:?}", f.reason) }),
        }
    }
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidInput("time grid must be finite and non-negative".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("time grid must be strictly ascending".into()));
    }
    Ok(())
}

fn check_theta(model: &dyn ModelSystem, theta: &[f64]) -> Result<()> {
    if theta.len() != model.param_dim() {
        return Err(Error::InvalidInput(format!(
            "parameter vector has length {}, model expects {}",
            theta.len(),
            model.param_dim()
        )));
    }
    Ok(())
}

/// Integrate the state equations and report states on `times`.
///
/// Errors only for malformed inputs; numerical failure is reported through
/// [`Trajectory::failure`].
pub fn integrate(
    model: &dyn ModelSystem,
    theta: &[f64],
    nu: &ExternalFactors,
    times: &[f64],
    tol: &Tolerances,
) -> Result<Trajectory> {
    check_grid(times)?;
    check_theta(model, theta)?;
    let n = model.state_dim();
    let mut y0 = vec![0.0; n];
    model.initial_state(theta, nu, &mut y0);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| model.rhs(t, y, theta, nu, dy);
    let (states, failure) = Dopri5::new(n, *tol).solve(rhs, &y0, times);
    Ok(Trajectory {
        times: times.to_vec(),
        state_dim: n,
        param_dim: model.param_dim(),
        states,
        sensitivities: None,
        failure,
    })
}

/// Integrate the state jointly with `∂x/∂θ`, which satisfies
/// `d/dt S = (∂f/∂x) S + ∂f/∂θ`. One step controller governs the
/// augmented vector.
pub fn integrate_with_sensitivities(
    model: &dyn ModelSystem,
    theta: &[f64],
    nu: &ExternalFactors,
    times: &[f64],
    tol: &Tolerances,
) -> Result<Trajectory> {
    check_grid(times)?;
    check_theta(model, theta)?;
    let n = model.state_dim();
    let p = model.param_dim();
    let dim = n + n * p;
    let mut y0 = vec![0.0; dim];
    model.initial_state(theta, nu, &mut y0[..n]);
    model.initial_sensitivity(theta, nu, &mut y0[n..]);

    let mut jx = vec![0.0; n * n];
    let mut jp = vec![0.0; n * p];
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let (x, s) = y.split_at(n);
        let (dx, ds) = dy.split_at_mut(n);
        model.rhs(t, x, theta, nu, dx);
        model.jacobian_state(t, x, theta, nu, &mut jx);
        model.jacobian_params(t, x, theta, nu, &mut jp);
        for i in 0..n {
            let row = &mut ds[i * p..(i + 1) * p];
            row.copy_from_slice(&jp[i * p..(i + 1) * p]);
            for l in 0..n {
                let a = jx[i * n + l];
                if a != 0.0 {
                    let srow = &s[l * p..(l + 1) * p];
                    for (r, &sv) in row.iter_mut().zip(srow) {
                        *r += a * sv;
                    }
                }
            }
        }
    };
    let (aug, failure) = Dopri5::new(dim, *tol).solve(rhs, &y0, times);

    let mut states = Vec::with_capacity(times.len() * n);
    let mut sens = Vec::with_capacity(times.len() * n * p);
    for k in 0..times.len() {
        let row = &aug[k * dim..(k + 1) * dim];
        states.extend_from_slice(&row[..n]);
        sens.extend_from_slice(&row[n..]);
    }
    Ok(Trajectory { times: times.to_vec(), state_dim: n, param_dim: p, states, sensitivities: Some(sens), failure })
}

/// Largest relative discrepancy between the analytic jacobians and central
/// finite differences of `rhs` at one point. The denominator is floored at
/// `1e-8 + 1e-6 * max|J|` so exact zeros do not blow up the ratio.
pub fn jacobian_discrepancy(model: &dyn ModelSystem, t: f64, x: &[f64], theta: &[f64], nu: &ExternalFactors) -> f64 {
    let n = model.state_dim();
    let p = model.param_dim();
    let mut jx = vec![0.0; n * n];
    let mut jp = vec![0.0; n * p];
    model.jacobian_state(t, x, theta, nu, &mut jx);
    model.jacobian_params(t, x, theta, nu, &mut jp);

    let mut fd_x = vec![0.0; n * n];
    let mut fd_p = vec![0.0; n * p];
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    let mut xv = x.to_vec();
    for j in 0..n {
        let h = 1e-6 * (1.0 + x[j].abs());
        xv[j] = x[j] + h;
        model.rhs(t, &xv, theta, nu, &mut fp);
        xv[j] = x[j] - h;
        model.rhs(t, &xv, theta, nu, &mut fm);
        xv[j] = x[j];
        for i in 0..n {
            fd_x[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let mut tv = theta.to_vec();
    for j in 0..p {
        let h = 1e-6 * (1.0 + theta[j].abs());
        tv[j] = theta[j] + h;
        model.rhs(t, x, &tv, nu, &mut fp);
        tv[j] = theta[j] - h;
        model.rhs(t, x, &tv, nu, &mut fm);
        tv[j] = theta[j];
        for i in 0..n {
            fd_p[i * p + j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let rel = |a: &[f64], b: &[f64]| {
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.iter()
            .zip(b)
            .map(|(u, v)| (u - v).abs() / (u.abs().max(v.abs()) + 1e-8 + 1e-6 * scale))
            .fold(0.0f64, f64::max)
    };
    rel(&jx, &fd_x).max(rel(&jp, &fd_p))
}
