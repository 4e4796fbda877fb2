use serde::{Deserialize, Serialize};

use super::{Dataset, Series};
use crate::error::{Error, Result};

/// Estimated σ² for one (observable, condition) series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub condition_id: String,
    pub observable: String,
    pub variance: f64,
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

pub(super) fn series_variance(s: &Series, floor: Option<f64>) -> Result<f64> {
    let fail =
        |reason: String| Error::Noise { observable: s.observable.clone(), condition: s.condition_id.clone(), reason };
    if s.replicates.is_empty() {
        return Err(fail("no observations".into()));
    }
    if let Some((k, _)) = s.replicates.iter().enumerate().find(|(_, r)| r.len() < 2) {
        return Err(fail(format!("time {} has fewer than 2 replicates; supply the variance explicitly", s.times[k])));
    }
    let var = s.replicates.iter().map(|r| sample_variance(r)).sum::<f64>() / s.replicates.len() as f64;
    let var = match floor {
        Some(f) => var.max(f),
        None => var,
    };
    if !(var > 0.0) {
        return Err(fail("replicates have zero variance".into()));
    }
    Ok(var)
}

/// σ² per (observable, condition): the time-average of the replicate sample
/// variances. Every series needs at least two replicates at every time.
pub fn estimate_noise(dataset: &Dataset) -> Result<Vec<NoiseEstimate>> {
    dataset
        .series
        .iter()
        .map(|s| {
            Ok(NoiseEstimate {
                condition_id: s.condition_id.clone(),
                observable: s.observable.clone(),
                variance: series_variance(s, None)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn series(reps: Vec<Vec<f64>>) -> Dataset {
        let times = (0..reps.len()).map(|k| k as f64).collect();
        Dataset {
            series: vec![Series {
                condition_id: "c".into(),
                observable: "x".into(),
                times,
                replicates: reps,
                variance: None,
            }],
        }
    }

    #[test]
    fn hand_computed_variance() {
        // {0,2} and {1,3} each have sample variance 2.
        let est = estimate_noise(&series(vec![vec![0.0, 2.0], vec![1.0, 3.0]])).unwrap();
        assert_eq!(est[0].variance, 2.0);
    }

    #[test]
    fn identical_replicates_rejected() {
        let d = series(vec![vec![1.0, 1.0], vec![2.0, 2.0]]);
        assert!(matches!(estimate_noise(&d), Err(Error::Noise { .. })));
        let mut d = d;
        d.estimate_missing_variances(Some(1e-6)).unwrap();
        assert_eq!(d.series[0].variance, Some(1e-6));
    }

    #[test]
    fn single_replicate_rejected() {
        let err = estimate_noise(&series(vec![vec![1.0], vec![2.0, 3.0]])).unwrap_err();
        match err {
            Error::Noise { observable, condition, .. } => {
                assert_eq!((observable.as_str(), condition.as_str()), ("x", "c"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn monte_carlo_consistency() {
        // 4 replicates × 4 times drawn N(0, 4); the estimator is unbiased.
        let normal = Normal::new(0.0, 2.0).unwrap();
        let mut total = 0.0;
        let seeds = 1000;
        for seed in 0..seeds {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let reps = (0..4).map(|_| (0..4).map(|_| normal.sample(&mut rng)).collect()).collect();
            total += estimate_noise(&series(reps)).unwrap()[0].variance;
        }
        let mean = total / seeds as f64;
        assert!((mean - 4.0).abs() < 0.4, "mean estimate {mean}");
    }
}
