use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{Dataset, Experiment};
use crate::objective::Conditions;
use crate::ode::{ModelSystem, Tolerances};
use crate::rng;

/// Zero-mean, symmetric, unimodal noise, scaled so its standard deviation
/// equals the configured σ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Normal,
    Uniform,
    /// Student's t with `dof > 2` degrees of freedom.
    StudentT {
        dof: f64,
    },
}

impl NoiseDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, sigma: f64) -> f64 {
        match *self {
            NoiseDistribution::Normal => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            NoiseDistribution::Uniform => {
                let half = sigma * 3f64.sqrt();
                rng.random_range(-half..=half)
            }
            NoiseDistribution::StudentT { dof } => {
                let t = StudentT::new(dof).expect("dof validated").sample(rng);
                sigma * t / (dof / (dof - 2.0)).sqrt()
            }
        }
    }

    /// Cumulative distribution of the unit-σ version.
    pub fn cdf(&self, x: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        match *self {
            // statrs' normal CDF is off by about 1e-12 in the tails; libm's erfc is accurate to an ulp or two.
            NoiseDistribution::Normal => 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2),
            NoiseDistribution::Uniform => {
                let half = 3f64.sqrt();
                ((x + half) / (2.0 * half)).clamp(0.0, 1.0)
            }
            NoiseDistribution::StudentT { dof } => {
                let s = (dof / (dof - 2.0)).sqrt();
                StudentsT::new(0.0, 1.0, dof).expect("dof validated").cdf(x * s)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseDistribution::StudentT { dof } if !(dof > 2.0) => {
                Err(Error::Config(format!("Student-t noise needs dof > 2 for a finite variance, got {dof}")))
            }
            _ => Ok(()),
        }
    }
}

/// Observation noise for synthetic data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub distribution: NoiseDistribution,
    /// Standard deviation used for observables without an override.
    pub sigma: f64,
    #[serde(default)]
    pub per_observable: BTreeMap<String, f64>,
    /// Record σ² in the dataset instead of estimating it from replicates.
    #[serde(default)]
    pub known_variance: bool,
}

impl NoiseSpec {
    pub fn normal(sigma: f64) -> Self {
        Self { distribution: NoiseDistribution::Normal, sigma, per_observable: BTreeMap::new(), known_variance: false }
    }

    pub fn with_known_variance(mut self) -> Self {
        self.known_variance = true;
        self
    }

    pub fn sigma_for(&self, observable: &str) -> f64 {
        self.per_observable.get(observable).copied().unwrap_or(self.sigma)
    }
}

/// Noisy observations `x(t; θ, ν) + ε` for every measurement of every
/// experiment, `replicates` draws per time point. Experiment `j` draws from
/// stream `simulate.j`.
pub fn simulate_dataset(
    model: &dyn ModelSystem,
    theta: &[f64],
    experiments: &[Experiment],
    noise: &NoiseSpec,
    replicates: usize,
    seed: u64,
) -> Result<Dataset> {
    noise.distribution.validate()?;
    if replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    let conditions = Conditions::from_experiments(experiments)?;
    let trajectories = conditions.simulate(model, theta, false, &Tolerances::fitting()).ok_or_else(|| {
        Error::Integration { time: f64::NAN, reason: "synthetic data parameters do not integrate".into() }
    })?;
    let mut data = Dataset::default();
    for (j, e) in experiments.iter().enumerate() {
        e.validate(model)?;
        let c = conditions
            .grids
            .iter()
            .position(|g| g.factors.condition_id == e.condition_id())
            .expect("condition registered");
        let tr = &trajectories[c];
        let mut rng = rng::stream(seed, "simulate", j as u64);
        for m in &e.measurements {
            let sigma = noise.sigma_for(&m.observable.name);
            if !(sigma >= 0.0) {
                return Err(Error::Config(format!("noise sigma for '{}' must be non-negative", m.observable.name)));
            }
            for &t in &m.times {
                let k = tr.times.iter().position(|&s| s == t).expect("time on merged grid");
                let exact = m.observable.apply(tr.state(k));
                for _ in 0..replicates {
                    let v = exact + noise.distribution.sample(&mut rng, sigma);
                    data.push(e.condition_id(), &m.observable.name, t, v);
                }
            }
            if noise.known_variance && sigma > 0.0 {
                data.find_mut(e.condition_id(), &m.observable.name).expect("series pushed").variance =
                    Some(sigma * sigma);
            }
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{decay, lorenz};

    #[test]
    fn zero_noise_is_exact() {
        let d = decay();
        let e = Experiment::new(d.default_factors[0].clone()).measure(d.observable("x").unwrap(), vec![1.0, 2.0]);
        let data = simulate_dataset(d.system.as_ref(), &[1.0], &[e], &NoiseSpec::normal(0.0), 3, 7).unwrap();
        let s = &data.series[0];
        for (k, t) in s.times.iter().enumerate() {
            for v in &s.replicates[k] {
                assert!((v - (-t).exp()).abs() < 1e-8);
            }
        }
        assert_eq!(s.variance, None);
    }

    #[test]
    fn seeded_and_reproducible() {
        let d = lorenz();
        let times: Vec<f64> = (1..=20).map(|k| k as f64 * 0.05).collect();
        let e = Experiment::new(d.default_factors[0].clone()).measure(d.observable("x").unwrap(), times);
        let noise = NoiseSpec::normal(0.5).with_known_variance();
        let a = simulate_dataset(d.system.as_ref(), &d.default_theta, &[e.clone()], &noise, 1, 3).unwrap();
        let b = simulate_dataset(d.system.as_ref(), &d.default_theta, &[e.clone()], &noise, 1, 3).unwrap();
        let c = simulate_dataset(d.system.as_ref(), &d.default_theta, &[e], &noise, 1, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.series[0].variance, Some(0.25));
    }

    #[test]
    fn noise_scaled_to_sigma() {
        let mut rng = rng::stream(1, "t", 0);
        for dist in [NoiseDistribution::Normal, NoiseDistribution::Uniform, NoiseDistribution::StudentT { dof: 5.0 }] {
            let n = 200_000;
            let var = (0..n).map(|_| dist.sample(&mut rng, 2.0).powi(2)).sum::<f64>() / n as f64;
            assert!((var - 4.0).abs() < 0.15, "{dist:?}: {var}");
            assert!((dist.cdf(0.0) - 0.5).abs() < 1e-12);
        }
        assert!(NoiseDistribution::StudentT { dof: 2.0 }.validate().is_err());
    }
}
