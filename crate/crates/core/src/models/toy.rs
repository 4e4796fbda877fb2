use crate::ode::{ExternalFactors, ModelSystem};

use super::names;

/// `dx = −θx`, `x(0) = x0`.
#[derive(Clone, Debug)]
pub struct Decay {
    states: Vec<String>,
    params: Vec<String>,
    factors: Vec<String>,
}

impl Default for Decay {
    fn default() -> Self {
        Self { states: names(&["x"]), params: names(&["rate"]), factors: names(&["x0"]) }
    }
}

impl ModelSystem for Decay {
    fn state_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn state_names(&self) -> &[String] {
        &self.states
    }
    fn param_names(&self) -> &[String] {
        &self.params
    }
    fn factor_names(&self) -> &[String] {
        &self.factors
    }
    fn rhs(&self, _t: f64, x: &[f64], th: &[f64], _nu: &ExternalFactors, dx: &mut [f64]) {
        dx[0] = -th[0] * x[0];
    }
    fn jacobian_state(&self, _t: f64, _x: &[f64], th: &[f64], _nu: &ExternalFactors, j: &mut [f64]) {
        j[0] = -th[0];
    }
    fn jacobian_params(&self, _t: f64, x: &[f64], _th: &[f64], _nu: &ExternalFactors, j: &mut [f64]) {
        j[0] = -x[0];
    }
    fn initial_state(&self, _th: &[f64], nu: &ExternalFactors, x0: &mut [f64]) {
        x0[0] = nu.value("x0");
    }
}

/// Two-compartment chain `dx = −θ₁x`, `dy = θ₁x − θ₂y`.
#[derive(Clone, Debug)]
pub struct Chain {
    states: Vec<String>,
    params: Vec<String>,
    factors: Vec<String>,
}

impl Default for Chain {
    fn default() -> Self {
        Self { states: names(&["x", "y"]), params: names(&["k1", "k2"]), factors: names(&["x0", "y0"]) }
    }
}

impl ModelSystem for Chain {
    fn state_dim(&self) -> usize {
        2
    }
    fn param_dim(&self) -> usize {
        2
    }
    fn state_names(&self) -> &[String] {
        &self.states
    }
    fn param_names(&self) -> &[String] {
        &self.params
    }
    fn factor_names(&self) -> &[String] {
        &self.factors
    }
    fn rhs(&self, _t: f64, s: &[f64], th: &[f64], _nu: &ExternalFactors, dx: &mut [f64]) {
        dx[0] = -th[0] * s[0];
        dx[1] = th[0] * s[0] - th[1] * s[1];
    }
    fn jacobian_state(&self, _t: f64, _s: &[f64], th: &[f64], _nu: &ExternalFactors, j: &mut [f64]) {
        j.copy_from_slice(&[-th[0], 0.0, th[0], -th[1]]);
    }
    fn jacobian_params(&self, _t: f64, s: &[f64], _th: &[f64], _nu: &ExternalFactors, j: &mut [f64]) {
        j.copy_from_slice(&[-s[0], 0.0, s[0], -s[1]]);
    }
    fn initial_state(&self, _th: &[f64], nu: &ExternalFactors, x0: &mut [f64]) {
        x0[0] = nu.value("x0");
        x0[1] = nu.value("y0");
    }
}
