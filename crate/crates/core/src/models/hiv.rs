use crate::ode::{ExternalFactors, ModelSystem};

use super::names;

/// Interferon-mediated protection of CD4 T cells from HIV.
///
/// States: uninfected cells `C`, refractory uninfected `CI`, infected `CH`,
/// refractory infected `CHI`, virus `H`. Eight rate parameters; the
/// interferon level `I(t)` and all initial states are known factors
/// (`I`, `C0`, `CI0`, `CH0`, `CHI0`, `H0`).
#[derive(Clone, Debug)]
pub struct HivIfn {
    states: Vec<String>,
    params: Vec<String>,
    factors: Vec<String>,
}

pub const INITIAL_FACTORS: [&str; 5] = ["C0", "CI0", "CH0", "CHI0", "H0"];

impl Default for HivIfn {
    fn default() -> Self {
        Self {
            states: names(&["C", "CI", "CH", "CHI", "H"]),
            params: names(&[
                "growth",
                "induction",
                "reversion",
                "infected_death",
                "infection",
                "production",
                "clearance",
                "half_saturation",
            ]),
            factors: names(&["I", "C0", "CI0", "CH0", "CHI0", "H0"]),
        }
    }
}

impl ModelSystem for HivIfn {
    fn state_dim(&self) -> usize {
        5
    }
    fn param_dim(&self) -> usize {
        8
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

    fn rhs(&self, t: f64, s: &[f64], th: &[f64], nu: &ExternalFactors, dx: &mut [f64]) {
        let (c, ci, ch, chi, h) = (s[0], s[1], s[2], s[3], s[4]);
        let i = nu.at("I", t);
        let sat = i / (th[7] + i);
        dx[0] = th[0] * c + th[2] * ci - th[1] * c * sat - th[4] * c * h;
        dx[1] = (th[0] - th[2]) * ci + th[1] * c * sat;
        dx[2] = (th[0] - th[3]) * ch + th[4] * c * h - th[1] * ch * sat + th[2] * chi;
        dx[3] = (th[0] - th[2] - th[3]) * chi + th[1] * ch * sat;
        dx[4] = th[5] * ch - th[6] * h;
    }

    fn jacobian_state(&self, t: f64, s: &[f64], th: &[f64], nu: &ExternalFactors, j: &mut [f64]) {
        let (c, h) = (s[0], s[4]);
        let i = nu.at("I", t);
        let sat = i / (th[7] + i);
        let g = th[1] * sat;
        #[rustfmt::skip]
        let m = [
            th[0] - g - th[4] * h, th[2], 0.0, 0.0, -th[4] * c,
            g, th[0] - th[2], 0.0, 0.0, 0.0,
            th[4] * h, 0.0, th[0] - th[3] - g, th[2], th[4] * c,
            0.0, 0.0, g, th[0] - th[2] - th[3], 0.0,
            0.0, 0.0, th[5], 0.0, -th[6],
        ];
        j.copy_from_slice(&m);
    }

    fn jacobian_params(&self, t: f64, s: &[f64], th: &[f64], nu: &ExternalFactors, j: &mut [f64]) {
        let (c, ci, ch, chi, h) = (s[0], s[1], s[2], s[3], s[4]);
        let i = nu.at("I", t);
        let sat = i / (th[7] + i);
        // ∂sat/∂θ₈
        let ds = if i == 0.0 { 0.0 } else { -i / ((th[7] + i) * (th[7] + i)) };
        #[rustfmt::skip]
        let m = [
            c, -c * sat, ci, 0.0, -c * h, 0.0, 0.0, -th[1] * c * ds,
            ci, c * sat, -ci, 0.0, 0.0, 0.0, 0.0, th[1] * c * ds,
            ch, -ch * sat, chi, -ch, c * h, 0.0, 0.0, -th[1] * ch * ds,
            chi, ch * sat, -chi, -chi, 0.0, 0.0, 0.0, th[1] * ch * ds,
            0.0, 0.0, 0.0, 0.0, 0.0, ch, -h, 0.0,
        ];
        j.copy_from_slice(&m);
    }

    fn initial_state(&self, _th: &[f64], nu: &ExternalFactors, x0: &mut [f64]) {
        for (x, name) in x0.iter_mut().zip(INITIAL_FACTORS) {
            *x = nu.value(name);
        }
    }
}
