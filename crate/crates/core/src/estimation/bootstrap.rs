use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{run_restart, FitObjective, FitOptions};
use super::{Dataset, Experiment};
use crate::error::{Error, Result};
use crate::objective::{Conditions, FitLayout};
use crate::ode::ModelSystem;
use crate::optim::Status;
use crate::rng;

/// Resampling unit for the bootstrap.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapMode {
    /// Replicates when every cell has at least two, residuals otherwise.
    #[default]
    Auto,
    /// Resample the replicate values within each (observable, condition, time) cell.
    Replicates,
    /// Add residuals of the best fit, resampled within each
    /// (observable, condition) series, to the best-fit predictions. Residuals
    /// are inflated by `√(n / (n − p))` to undo the shrinkage of fitting
    /// `p` parameters to `n` observations.
    Residuals,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapOptions {
    pub samples: usize,
    pub alpha: f64,
    pub mode: BootstrapMode,
    /// Error out when more than this fraction of refits fails.
    pub max_discard_fraction: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self { samples: 200, alpha: 0.05, mode: BootstrapMode::Auto, max_discard_fraction: 0.2 }
    }
}

/// Percentile interval for the best-fit error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub mode: BootstrapMode,
    /// Sorted best-fit errors of the retained resamples.
    pub samples: Vec<f64>,
    pub discarded: usize,
}

/// Order statistics at levels `α/2` and `1 − α/2` of a sorted sample:
/// `s[⌊αB/2⌋]` and `s[⌈(1 − α/2)B⌉ − 1]`.
pub fn percentile_bounds(sorted: &[f64], alpha: f64) -> (f64, f64) {
    let b = sorted.len();
    let lo = ((alpha / 2.0 * b as f64).floor() as usize).min(b - 1);
    let hi = (((1.0 - alpha / 2.0) * b as f64).ceil() as usize).clamp(1, b) - 1;
    (sorted[lo], sorted[hi])
}

/// Bootstrap the best-fit error. Each resample (stream `boot.b`) is refit
/// by Newton–CG warm-started at `theta_star`; noise variances stay fixed.
pub fn bootstrap_interval(
    model: &dyn ModelSystem,
    experiments: &[Experiment],
    dataset: &Dataset,
    theta_star: &[f64],
    fit_opts: &FitOptions,
    opts: &BootstrapOptions,
    seed: u64,
) -> Result<FitInterval> {
    if opts.samples < 100 {
        return Err(Error::Config(format!("bootstrap needs at least 100 samples, got {}", opts.samples)));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
    }
    let conditions = Conditions::from_experiments(experiments)?;
    let layout = FitLayout::new(model, experiments, dataset, &conditions)?;
    let mode = match opts.mode {
        BootstrapMode::Auto if layout.terms.iter().all(|t| t.values.len() >= 2) => BootstrapMode::Replicates,
        BootstrapMode::Auto => BootstrapMode::Residuals,
        m => m,
    };

    // Residual pools per series.
    let mut pools: Vec<Vec<f64>> = Vec::new();
    let mut preds = Vec::new();
    if mode == BootstrapMode::Residuals {
        let tr = conditions
            .simulate(model, theta_star, false, &fit_opts.tolerances)
            .ok_or_else(|| Error::Integration { time: f64::NAN, reason: "best fit does not integrate".into() })?;
        preds = layout.predictions(&tr);
        let n: usize = layout.terms.iter().map(|t| t.values.len()).sum();
        let p = layout.param_dim;
        if n <= p {
            return Err(Error::Data(format!("residual bootstrap needs more than {p} observations, got {n}")));
        }
        let inflate = (n as f64 / (n - p) as f64).sqrt();
        pools = vec![Vec::new(); dataset.series.len()];
        for (t, pred) in layout.terms.iter().zip(&preds) {
            pools[t.series].extend(t.values.iter().map(|v| inflate * (v - pred)));
        }
    }

    let results: Vec<Option<f64>> = (0..opts.samples)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, "boot", b as u64);
            let values: Vec<Vec<f64>> = layout
                .terms
                .iter()
                .enumerate()
                .map(|(k, t)| match mode {
                    BootstrapMode::Residuals => {
                        let pool = &pools[t.series];
                        (0..t.values.len()).map(|_| preds[k] + pool[rng.random_range(0..pool.len())]).collect()
                    }
                    _ => (0..t.values.len()).map(|_| t.values[rng.random_range(0..t.values.len())]).collect(),
                })
                .collect();
            let resampled = layout.with_values(values);
            let obj = FitObjective {
                model,
                conditions: &conditions,
                layout: &resampled,
                space: &fit_opts.space,
                tol: fit_opts.tolerances,
            };
            let r = run_restart(&obj, b, theta_star.to_vec(), &fit_opts.newton);
            // A refit that ran out of iterations still attains its objective; only
            // refits that could not be evaluated are discarded.
            (r.status != Status::Failed && r.objective.is_finite()).then_some(r.objective)
        })
        .collect();

    let mut samples: Vec<f64> = results.iter().flatten().copied().collect();
    let discarded = opts.samples - samples.len();
    if discarded > 0 {
        log::warn!("bootstrap: discarded {discarded} of {} resamples", opts.samples);
    }
    if samples.is_empty() || discarded as f64 > opts.max_discard_fraction * opts.samples as f64 {
        return Err(Error::Bootstrap { discarded, total: opts.samples });
    }
    samples.sort_by(f64::total_cmp);
    let (lower, upper) = percentile_bounds(&samples, opts.alpha);
    Ok(FitInterval { lower, upper, alpha: opts.alpha, mode, samples, discarded })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_indices() {
        let s: Vec<f64> = (0..200).map(f64::from).collect();
        // ⌊0.025·200⌋ = 5, ⌈0.975·200⌉ − 1 = 194
        assert_eq!(percentile_bounds(&s, 0.05), (5.0, 194.0));
        let s: Vec<f64> = (0..101).map(f64::from).collect();
        // ⌊2.525⌋ = 2, ⌈98.475⌉ − 1 = 98
        assert_eq!(percentile_bounds(&s, 0.05), (2.0, 98.0));
    }
}
