use crate::ode::{ExternalFactors, ModelSystem};

use super::names;

/// `dx = θ₁(y − x)`, `dy = x(θ₂ − z) − y`, `dz = xy − θ₃z`; the initial
/// state comes from the factors `x0`, `y0`, `z0`.
#[derive(Clone, Debug)]
pub struct Lorenz {
    states: Vec<String>,
    params: Vec<String>,
    factors: Vec<String>,
}

impl Default for Lorenz {
    fn default() -> Self {
        Self {
            states: names(&["x", "y", "z"]),
            params: names(&["sigma", "rho", "beta"]),
            factors: names(&["x0", "y0", "z0"]),
        }
    }
}

impl ModelSystem for Lorenz {
    fn state_dim(&self) -> usize {
        3
    }
    fn param_dim(&self) -> usize {
        3
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
        let (x, y, z) = (s[0], s[1], s[2]);
        dx[0] = th[0] * (y - x);
        dx[1] = x * (th[1] - z) - y;
        dx[2] = x * y - th[2] * z;
    }

    fn jacobian_state(&self, _t: f64, s: &[f64], th: &[f64], _nu: &ExternalFactors, j: &mut [f64]) {
        let (x, y, z) = (s[0], s[1], s[2]);
        j.copy_from_slice(&[-th[0], th[0], 0.0, th[1] - z, -1.0, -x, y, x, -th[2]]);
    }

    fn jacobian_params(&self, _t: f64, s: &[f64], _th: &[f64], _nu: &ExternalFactors, j: &mut [f64]) {
        let (x, y, z) = (s[0], s[1], s[2]);
        j.copy_from_slice(&[y - x, 0.0, 0.0, 0.0, x, 0.0, 0.0, 0.0, -z]);
    }

    fn initial_state(&self, _th: &[f64], nu: &ExternalFactors, x0: &mut [f64]) {
        x0[0] = nu.value("x0");
        x0[1] = nu.value("y0");
        x0[2] = nu.value("z0");
    }
}
