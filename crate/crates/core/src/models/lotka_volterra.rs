use crate::ode::{ExternalFactors, ModelSystem};

use super::names;

/// Predator–prey model `dx = θ₁θ₃x − θ₂θ₃xy`, `dy = θ₂θ₄xy − θ₁θ₄y`.
///
/// Only the products `θ₁θ₃`, `θ₂θ₃`, `θ₂θ₄`, `θ₁θ₄` enter the dynamics, so
/// `(kθ₁, kθ₂, θ₃/k, θ₄/k)` gives the same trajectory for every `k > 0`.
#[derive(Clone, Debug)]
pub struct LotkaVolterra {
    states: Vec<String>,
    params: Vec<String>,
    factors: Vec<String>,
}

impl Default for LotkaVolterra {
    fn default() -> Self {
        Self {
            states: names(&["x", "y"]),
            params: names(&["theta1", "theta2", "theta3", "theta4"]),
            factors: names(&["x0", "y0"]),
        }
    }
}

impl ModelSystem for LotkaVolterra {
    fn state_dim(&self) -> usize {
        2
    }
    fn param_dim(&self) -> usize {
        4
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
        let (x, y) = (s[0], s[1]);
        dx[0] = th[0] * th[2] * x - th[1] * th[2] * x * y;
        dx[1] = th[1] * th[3] * x * y - th[0] * th[3] * y;
    }

    fn jacobian_state(&self, _t: f64, s: &[f64], th: &[f64], _nu: &ExternalFactors, j: &mut [f64]) {
        let (x, y) = (s[0], s[1]);
        j[0] = th[0] * th[2] - th[1] * th[2] * y;
        j[1] = -th[1] * th[2] * x;
        j[2] = th[1] * th[3] * y;
        j[3] = th[1] * th[3] * x - th[0] * th[3];
    }

    fn jacobian_params(&self, _t: f64, s: &[f64], th: &[f64], _nu: &ExternalFactors, j: &mut [f64]) {
        let (x, y) = (s[0], s[1]);
        let xy = x * y;
        j.copy_from_slice(&[
            th[2] * x,
            -th[2] * xy,
            th[0] * x - th[1] * xy,
            0.0,
            -th[3] * y,
            th[3] * xy,
            0.0,
            th[1] * xy - th[0] * y,
        ]);
    }

    fn initial_state(&self, _th: &[f64], nu: &ExternalFactors, x0: &mut [f64]) {
        x0[0] = nu.value("x0");
        x0[1] = nu.value("y0");
    }
}
