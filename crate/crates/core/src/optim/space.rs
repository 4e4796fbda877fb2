use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Optimize `ln θ`; θ stays positive. Restarts are log-uniform.
    #[default]
    Log,
    /// Optimize θ directly. Restarts are uniform.
    Linear,
}

/// Restart box and optimization scale for one parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub scale: Scale,
}

impl ParamRange {
    pub fn log(lower: f64, upper: f64) -> Self {
        Self { lower, upper, scale: Scale::Log }
    }

    pub fn linear(lower: f64, upper: f64) -> Self {
        Self { lower, upper, scale: Scale::Linear }
    }
}

/// Maps model parameters θ to the coordinates seen by the optimizers. The
/// box bounds restart sampling and confines every optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub ranges: Vec<ParamRange>,
}

impl ParamSpace {
    pub fn new(ranges: Vec<ParamRange>) -> Result<Self> {
        for (i, r) in ranges.iter().enumerate() {
            if !(r.lower < r.upper) || !r.lower.is_finite() || !r.upper.is_finite() {
                return Err(Error::Config(format!("parameter box {i} must satisfy lower < upper")));
            }
            if r.scale == Scale::Log && r.lower <= 0.0 {
                return Err(Error::Config(format!("log-scaled parameter box {i} must be positive")));
            }
        }
        Ok(Self { ranges })
    }

    /// Log-scaled box spanning one decade either side of `theta`.
    pub fn around(theta: &[f64]) -> Self {
        let ranges = theta
            .iter()
            .map(|&t| {
                if t > 0.0 {
                    ParamRange::log(t / 10.0, t * 10.0)
                } else {
                    let w = t.abs().max(1.0) * 10.0;
                    ParamRange::linear(t - w, t + w)
                }
            })
            .collect();
        Self { ranges }
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn to_internal(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.ranges
            .iter()
            .zip(theta)
            .enumerate()
            .map(|(i, (r, &t))| match r.scale {
                Scale::Log if t > 0.0 => Ok(t.ln()),
                Scale::Log => Err(Error::InvalidInput(format!(
                    "parameter {i} is log-scaled but has value {t}; use a linear scale for non-positive parameters"
                ))),
                Scale::Linear => Ok(t),
            })
            .collect()
    }

    pub fn to_theta(&self, x: &[f64]) -> Vec<f64> {
        self.ranges
            .iter()
            .zip(x)
            .map(|(r, &v)| match r.scale {
                Scale::Log => v.exp(),
                Scale::Linear => v,
            })
            .collect()
    }

    /// `dθ_i/dx_i` at `theta`.
    pub fn jacobian_diag(&self, theta: &[f64]) -> Vec<f64> {
        self.ranges
            .iter()
            .zip(theta)
            .map(|(r, &t)| match r.scale {
                Scale::Log => t,
                Scale::Linear => 1.0,
            })
            .collect()
    }

    /// The box in internal coordinates, as `(lower, upper)`.
    pub fn internal_box(&self) -> (Vec<f64>, Vec<f64>) {
        self.ranges
            .iter()
            .map(|r| match r.scale {
                Scale::Log => (r.lower.ln(), r.upper.ln()),
                Scale::Linear => (r.lower, r.upper),
            })
            .unzip()
    }

    /// Clamp `theta` into the box.
    pub fn clamp(&self, theta: &mut [f64]) {
        for (t, r) in theta.iter_mut().zip(&self.ranges) {
            *t = t.clamp(r.lower, r.upper);
        }
    }

    /// Draw a restart point inside the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.ranges
            .iter()
            .map(|r| {
                let u: f64 = rng.random();
                match r.scale {
                    Scale::Log => (r.lower.ln() + u * (r.upper.ln() - r.lower.ln())).exp(),
                    Scale::Linear => r.lower + u * (r.upper - r.lower),
                }
            })
            .collect()
    }
}

/// Chain-rule a θ-space gradient and curvature into internal coordinates.
/// The curvature transform keeps only the `D H D` part, which is what the
/// Gauss–Newton matrices need.
pub(crate) fn pull_back(diag: &[f64], gradient: &mut [f64], curvature: Option<&mut [f64]>) {
    let n = diag.len();
    let m = gradient.len() / n;
    for (k, g) in gradient.iter_mut().enumerate() {
        *g *= diag[k % n];
    }
    if let Some(c) = curvature {
        let dim = n * m;
        for i in 0..dim {
            for j in 0..dim {
                c[i * dim + j] *= diag[i % n] * diag[j % n];
            }
        }
    }
}
