//! Built-in models, a name registry, user-defined models from text, and a
//! synthetic-data generator.

pub mod expr;
mod hiv;
mod lorenz;
mod lotka_volterra;
mod pinned;
mod simulate;
mod toy;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimation::Observable;
use crate::ode::{ExternalFactors, ModelSystem};
use crate::optim::{ParamRange, ParamSpace};

pub use expr::{ExprModel, InlineModel};
pub use hiv::HivIfn;
pub use lorenz::Lorenz;
pub use lotka_volterra::LotkaVolterra;
pub use pinned::Pinned;
pub use simulate::{simulate_dataset, NoiseDistribution, NoiseSpec};
pub use toy::{Chain, Decay};

pub(crate) fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// A model together with its reference parameters and conditions.
#[derive(Clone)]
pub struct ModelDescriptor {
    pub name: String,
    pub system: Arc<dyn ModelSystem>,
    /// Parameters used to generate synthetic data.
    pub default_theta: Vec<f64>,
    pub default_factors: Vec<ExternalFactors>,
    /// Restart box and optimization scale.
    pub parameter_space: ParamSpace,
    pub documentation: String,
}

impl std::fmt::Debug for ModelDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelDescriptor")
            .field("name", &self.name)
            .field("default_theta", &self.default_theta)
            .field("default_factors", &self.default_factors)
            .finish_non_exhaustive()
    }
}

impl ModelDescriptor {
    pub fn observable(&self, text: &str) -> Result<Observable> {
        Observable::parse(text, self.system.state_names())
    }

    pub fn factors(&self, condition_id: &str) -> Result<&ExternalFactors> {
        self.default_factors
            .iter()
            .find(|f| f.condition_id == condition_id)
            .ok_or_else(|| Error::Config(format!("model '{}' has no condition '{condition_id}'", self.name)))
    }
}

fn log_box(bounds: &[(f64, f64)]) -> ParamSpace {
    ParamSpace { ranges: bounds.iter().map(|&(l, u)| ParamRange::log(l, u)).collect() }
}

/// Chaotic three-state system, `x` observed from `(10, 20, 3)`; the `y0=7`
/// condition is the natural extrapolation target.
pub fn lorenz() -> ModelDescriptor {
    let start = |id: &str, y0: f64| ExternalFactors::new(id).with("x0", 10.0).with("y0", y0).with("z0", 3.0);
    ModelDescriptor {
        name: "lorenz".into(),
        system: Arc::new(Lorenz::default()),
        default_theta: vec![7.0, 38.0, 5.0],
        default_factors: vec![start("y0=20", 20.0), start("y0=7", 7.0)],
        parameter_space: log_box(&[(3.5, 14.0), (19.0, 76.0), (2.5, 10.0)]),
        documentation: "dx = sigma (y - x), dy = x (rho - z) - y, dz = x y - beta z; \
                        initial state from factors x0, y0, z0"
            .into(),
    }
}

/// Predator–prey model with a one-parameter family of indistinguishable
/// parameter vectors.
pub fn lotka_volterra() -> ModelDescriptor {
    ModelDescriptor {
        name: "lotka_volterra".into(),
        system: Arc::new(LotkaVolterra::default()),
        default_theta: vec![1.0, 0.05, 1.0, 1.0],
        default_factors: vec![ExternalFactors::new("base").with("x0", 10.0).with("y0", 10.0)],
        parameter_space: log_box(&[(0.2, 5.0), (0.01, 0.25), (0.2, 5.0), (0.2, 5.0)]),
        documentation: "dx = t1 t3 x - t2 t3 x y, dy = t2 t4 x y - t1 t4 y; initial state from x0, y0".into(),
    }
}

/// Interferon levels (ng/mL) of the reference tissue-culture design.
pub const IFN_LEVELS: [f64; 7] = [0.0, 0.002, 0.02, 0.2, 2.0, 20.0, 200.0];

/// Synthetic reference rates for the HIV model (per day), including the
/// viral clearance rate that is held fixed during estimation.
pub const HIV_THETA: [f64; 8] = [0.2, 3.0, 0.5, 0.8, 0.004, 20.0, 2.0, 0.05];

/// Known initial state `(C, CI, CH, CHI, H)` for the synthetic HIV design.
pub const HIV_INITIAL: [f64; 5] = [100.0, 0.0, 0.0, 0.0, 50.0];

/// Condition id for an interferon level, e.g. `I=0.002`.
pub fn ifn_condition(level: f64) -> String {
    format!("I={level}")
}

/// Interferon level condition with the reference initial state.
pub fn hiv_factors(level: f64) -> ExternalFactors {
    let mut f = ExternalFactors::new(ifn_condition(level)).with("I", level);
    for (name, v) in hiv::INITIAL_FACTORS.iter().zip(HIV_INITIAL) {
        f = f.with(*name, v);
    }
    f
}

/// HIV model with the listed parameters pinned (by name).
pub fn hiv_ifn_with(fixed: &[(String, f64)]) -> Result<ModelDescriptor> {
    let full: Arc<dyn ModelSystem> = Arc::new(HivIfn::default());
    let pinned = Pinned::new(full.clone(), fixed)?;
    let free_names = pinned.param_names().to_vec();
    let all = full.param_names();
    let default_theta: Vec<f64> = free_names
        .iter()
        .map(|n| HIV_THETA[all.iter().position(|a| a == n).expect("free name comes from the model")])
        .collect();
    let parameter_space =
        ParamSpace { ranges: default_theta.iter().map(|&t| ParamRange::log(t / 10.0, t * 10.0)).collect() };
    Ok(ModelDescriptor {
        name: "hiv_ifn".into(),
        system: Arc::new(pinned),
        default_theta,
        default_factors: IFN_LEVELS.iter().map(|&l| hiv_factors(l)).collect(),
        parameter_space,
        documentation: "CD4 T cells C, refractory CI, infected CH, refractory infected CHI, virus H; \
                        interferon level I and initial states are known factors; clearance pinned by default"
            .into(),
    })
}

/// HIV model with the viral clearance rate pinned at its reference value.
pub fn hiv_ifn() -> ModelDescriptor {
    hiv_ifn_with(&[("clearance".to_string(), HIV_THETA[6])]).expect("clearance is a model parameter")
}

/// `dx = −θx` from `x0 = 1`.
pub fn decay() -> ModelDescriptor {
    ModelDescriptor {
        name: "decay".into(),
        system: Arc::new(Decay::default()),
        default_theta: vec![1.0],
        default_factors: vec![
            ExternalFactors::new("x0=1").with("x0", 1.0),
            ExternalFactors::new("x0=2").with("x0", 2.0),
        ],
        parameter_space: log_box(&[(0.1, 10.0)]),
        documentation: "dx = -rate x; initial state from x0".into(),
    }
}

/// `dx = −k₁x`, `dy = k₁x − k₂y`.
pub fn chain() -> ModelDescriptor {
    ModelDescriptor {
        name: "chain".into(),
        system: Arc::new(Chain::default()),
        default_theta: vec![1.0, 0.3],
        default_factors: vec![
            ExternalFactors::new("x").with("x0", 10.0).with("y0", 0.0),
            ExternalFactors::new("y").with("x0", 0.0).with("y0", 10.0),
        ],
        parameter_space: log_box(&[(0.1, 10.0), (0.03, 3.0)]),
        documentation: "dx = -k1 x, dy = k1 x - k2 y; initial state from x0, y0".into(),
    }
}

/// Names accepted by [`lookup`].
pub const REGISTRY: [&str; 5] = ["lorenz", "lotka_volterra", "hiv_ifn", "decay", "chain"];

pub fn lookup(name: &str) -> Result<ModelDescriptor> {
    match name {
        "lorenz" => Ok(lorenz()),
        "lotka_volterra" => Ok(lotka_volterra()),
        "hiv_ifn" => Ok(hiv_ifn()),
        "decay" => Ok(decay()),
        "chain" => Ok(chain()),
        other => Err(Error::Config(format!("unknown model '{other}'; known models: {}", REGISTRY.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, Tolerances};

    #[test]
    fn lorenz_rhs_by_hand() {
        let d = lorenz();
        let nu = d.factors("y0=20").unwrap();
        let mut dx = [0.0; 3];
        d.system.rhs(0.0, &[10.0, 20.0, 3.0], &d.default_theta, nu, &mut dx);
        assert_eq!(dx, [70.0, 330.0, 185.0]);
        d.system.rhs(0.0, &[0.0; 3], &d.default_theta, nu, &mut dx);
        assert_eq!(dx, [0.0; 3]);
        assert_eq!(d.default_theta, vec![7.0, 38.0, 5.0]);
    }

    #[test]
    fn lotka_volterra_rhs_by_hand() {
        let d = lotka_volterra();
        let mut dx = [0.0; 2];
        d.system.rhs(0.0, &[10.0, 10.0], &d.default_theta, &d.default_factors[0], &mut dx);
        assert_eq!(dx, [5.0, -5.0]);
        assert_eq!(d.default_theta, vec![1.0, 0.05, 1.0, 1.0]);
    }

    #[test]
    fn hiv_zero_interferon_limit() {
        let m = HivIfn::default();
        let nu = hiv_factors(0.0);
        let x = [50.0, 7.0, 3.0, 2.0, 10.0];
        let mut dx = [0.0; 5];
        m.rhs(0.0, &x, &HIV_THETA, &nu, &mut dx);
        assert!((dx[1] - (HIV_THETA[0] - HIV_THETA[2]) * x[1]).abs() < 1e-12);
    }

    #[test]
    fn hiv_pins_clearance() {
        let d = hiv_ifn();
        assert_eq!(d.system.param_dim(), 7);
        assert!(!d.system.param_names().iter().any(|n| n == "clearance"));
        assert_eq!(d.default_factors.len(), 7);
        assert!(hiv_ifn_with(&[("nope".into(), 1.0)]).is_err());
    }

    #[test]
    fn registry_defaults_integrate() {
        for name in REGISTRY {
            let d = lookup(name).unwrap();
            assert_eq!(d.default_theta.len(), d.system.param_dim());
            assert_eq!(d.parameter_space.dim(), d.system.param_dim());
            for nu in &d.default_factors {
                let tr =
                    integrate(d.system.as_ref(), &d.default_theta, nu, &[0.5, 1.0], &Tolerances::fitting()).unwrap();
                assert!(tr.is_ok(), "{name} at {}", nu.condition_id);
            }
        }
        assert!(lookup("nope").is_err());
    }
}
