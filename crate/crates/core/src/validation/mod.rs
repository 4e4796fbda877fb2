//! Seeded Monte Carlo checks of the guarantees behind the deviation method:
//! coverage of the true model, the centered-interval property of the noise,
//! stochastic ordering of fit errors, the 4η closeness bound, and whether
//! impact estimates bound the deviation actually observed afterwards.

mod coverage;
mod ordering;
mod proposition;
mod worst_case;

use serde::{Deserialize, Serialize};

pub use coverage::{run_coverage_study, CoverageSpec, CoverageStudy, CoverageTrial};
pub use ordering::{check_fit_error_ordering, OrderingReport, OrderingSpec};
pub use proposition::{check_proposition, PropositionReport, PropositionSample};
pub use worst_case::{check_worst_case, WorstCaseOutcome, WorstCaseReport, WorstCaseSpec};

use crate::models::NoiseDistribution;

/// Three binomial standard errors of a proportion `p` estimated from `n` trials.
pub fn binomial_slack(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Violation {
    pub x: f64,
    pub a: f64,
    pub shifted: f64,
    pub centered: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub checked: usize,
    pub violations: Vec<Lemma1Violation>,
}

impl Lemma1Report {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check `F(x + a) − F(−x + a) ≤ F(x) − F(−x) + tol` on every grid pair:
/// intervals centered on zero hold the most mass.
pub fn check_lemma1_cdf(cdf: impl Fn(f64) -> f64, xs: &[f64], shifts: &[f64], tol: f64) -> Lemma1Report {
    let mut violations = Vec::new();
    for &x in xs {
        let centered = cdf(x) - cdf(-x);
        for &a in shifts {
            let shifted = cdf(x + a) - cdf(-x + a);
            if shifted > centered + tol {
                violations.push(Lemma1Violation { x, a, shifted, centered });
            }
        }
    }
    Lemma1Report { checked: xs.len() * shifts.len(), violations }
}

/// [`check_lemma1_cdf`] for a unit-σ noise distribution at tolerance 1e-12.
pub fn check_lemma1(distribution: &NoiseDistribution, xs: &[f64], shifts: &[f64]) -> Lemma1Report {
    check_lemma1_cdf(|x| distribution.cdf(x), xs, shifts, 1e-12)
}

/// `{start, start + step, …}` up to `end` inclusive, free of accumulated drift.
pub fn grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `erf(z) = 2/√π · e^{−z²} · Σ (2z²)ⁿ z / (2n+1)!!`; every term is
    /// positive, so there is no cancellation for |z| ≤ 3.
    fn erf_series(z: f64) -> f64 {
        let mut term = z;
        let mut sum = z;
        for n in 1..200 {
            term *= 2.0 * z * z / (2 * n + 1) as f64;
            sum += term;
        }
        2.0 / std::f64::consts::PI.sqrt() * (-z * z).exp() * sum
    }

    fn normal_cdf(x: f64) -> f64 {
        0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
    }

    #[test]
    fn normal_cdf_matches_series() {
        for x in grid(-3.0, 3.0, 0.25) {
            let d = NoiseDistribution::Normal.cdf(x) - normal_cdf(x);
            assert!(d.abs() < 1e-14, "x={x}: {d}");
        }
        assert!((normal_cdf(2.0) - normal_cdf(0.0) - 0.47725).abs() < 1e-5);
        assert!((normal_cdf(1.0) - normal_cdf(-1.0) - 0.68269).abs() < 1e-5);
    }

    #[test]
    fn zero_width_interval() {
        let r = check_lemma1(&NoiseDistribution::Normal, &[0.0], &grid(-3.0, 3.0, 0.5));
        assert!(r.passed());
    }

    #[test]
    fn uniform_flat_region_equality() {
        let cdf = |x: f64| ((x + 1.0) / 2.0).clamp(0.0, 1.0);
        let r = check_lemma1_cdf(cdf, &[0.5], &[0.4], 1e-12);
        assert!(r.passed());
        assert!((cdf(0.9) - cdf(-0.1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn skewed_distribution_fails() {
        // Exponential shifted to mean zero is not symmetric.
        let cdf = |x: f64| if x < -1.0 { 0.0 } else { 1.0 - (-(x + 1.0)).exp() };
        let r = check_lemma1_cdf(cdf, &[0.5], &[-0.5], 1e-12);
        assert!(!r.passed());
    }

    #[test]
    fn student_t_grid() {
        let xs = grid(0.0, 3.0, 0.1);
        let shifts = grid(-3.0, 3.0, 0.1);
        assert!(check_lemma1(&NoiseDistribution::StudentT { dof: 3.0 }, &xs, &shifts).passed());
    }

    #[test]
    fn grid_endpoints() {
        let g = grid(0.0, 3.0, 0.1);
        assert_eq!(g.len(), 31);
        assert!((g[30] - 3.0).abs() < 1e-12);
    }
}
