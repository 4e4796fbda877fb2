use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{Dataset, Experiment};
use crate::objective::{Conditions, FitLayout};
use crate::ode::{ModelSystem, Tolerances};
use crate::rng;

/// One sampled pair and both links of the bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropositionSample {
    pub fit_errors: [f64; 2],
    /// `z_dev(θ¹, θ²)` on the candidate.
    pub deviation: f64,
    /// `(√z_fit¹ + √z_fit²)²`.
    pub triangle: f64,
    pub on_boundary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub eta: f64,
    pub samples: Vec<PropositionSample>,
    /// Pairs where the deviation exceeded the triangle bound.
    pub triangle_violations: usize,
    /// Pairs where the triangle bound exceeded `4η`.
    pub bound_violations: usize,
    /// Largest `deviation / 4η` seen.
    pub max_ratio: f64,
}

impl PropositionReport {
    pub fn passed(&self) -> bool {
        self.triangle_violations == 0 && self.bound_violations == 0
    }
}

struct CandidateFit<'a> {
    model: &'a dyn ModelSystem,
    conditions: Conditions,
    layout: FitLayout,
    tol: Tolerances,
}

impl CandidateFit<'_> {
    fn predictions(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let tr = self.conditions.simulate(self.model, theta, false, &self.tol)?;
        Some(self.layout.predictions(&tr))
    }

    fn fit_error(&self, pred: &[f64]) -> f64 {
        self.layout
            .terms
            .iter()
            .zip(pred)
            .map(|(t, p)| t.values.iter().map(|v| (p - v).powi(2)).sum::<f64>() * t.inv_var)
            .sum()
    }

    fn deviation(&self, a: &[f64], b: &[f64]) -> f64 {
        self.layout
            .terms
            .iter()
            .zip(a.iter().zip(b))
            .map(|(t, (p, q))| t.values.len() as f64 * t.inv_var * (p - q).powi(2))
            .sum()
    }

    fn error_at(&self, theta: &[f64]) -> f64 {
        self.predictions(theta).map_or(f64::INFINITY, |p| self.fit_error(&p))
    }

    /// Walk from `center` along `dir` (log scale) to the point where the fit
    /// error reaches `level`, staying on the feasible side.
    fn along(&self, center: &[f64], dir: &[f64], level: f64) -> Vec<f64> {
        let at = |s: f64| -> Vec<f64> { center.iter().zip(dir).map(|(c, d)| c * (s * d).exp()).collect() };
        let mut hi = 0.01;
        while self.error_at(&at(hi)) <= level && hi < 10.0 {
            hi *= 2.0;
        }
        if self.error_at(&at(hi)) <= level {
            return at(hi);
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.error_at(&at(mid)) <= level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(lo)
    }
}

/// Sample `n_pairs` pairs whose fit errors on the candidate data are at most
/// `eta` and check `z_dev(θ¹, θ²) ≤ (√z_fit¹ + √z_fit²)² ≤ 4η` at relative
/// tolerance 1e-9. Half the pairs sit on the constraint boundary; the rest
/// at uniformly drawn levels below it. Pair `k` draws from stream `pair.k`.
#[allow(clippy::too_many_arguments)]
pub fn check_proposition(
    model: &dyn ModelSystem,
    candidate: &Experiment,
    data: &Dataset,
    center: &[f64],
    eta: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<PropositionReport> {
    let conditions = Conditions::from_experiments(std::slice::from_ref(candidate))?;
    let layout = FitLayout::new(model, std::slice::from_ref(candidate), data, &conditions)?;
    let cf = CandidateFit { model, conditions, layout, tol: Tolerances::fitting() };
    let base = cf.error_at(center);
    if !(base <= eta) {
        return Err(Error::Infeasible(format!("sampling center has fit error {base} above eta = {eta}")));
    }
    let tol = 1e-9;
    let mut samples = Vec::with_capacity(n_pairs);
    let (mut triangle_violations, mut bound_violations, mut max_ratio) = (0, 0, 0.0f64);
    for k in 0..n_pairs {
        let mut rng = rng::stream(seed, "pair", k as u64);
        let on_boundary = k % 2 == 0;
        let mut member = || {
            let dir: Vec<f64> = center.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let level = if on_boundary { eta } else { base + rng.random::<f64>() * (eta - base) };
            cf.along(center, &dir, level)
        };
        let (t1, t2) = (member(), member());
        let (Some(p1), Some(p2)) = (cf.predictions(&t1), cf.predictions(&t2)) else {
            continue;
        };
        let fit_errors = [cf.fit_error(&p1), cf.fit_error(&p2)];
        let deviation = cf.deviation(&p1, &p2);
        let triangle = (fit_errors[0].sqrt() + fit_errors[1].sqrt()).powi(2);
        if deviation > triangle + tol * triangle.max(1.0) {
            triangle_violations += 1;
        }
        if triangle > 4.0 * eta + tol * (4.0 * eta).max(1.0) {
            bound_violations += 1;
        }
        if eta > 0.0 {
            max_ratio = max_ratio.max(deviation / (4.0 * eta));
        }
        samples.push(PropositionSample { fit_errors, deviation, triangle, on_boundary });
    }
    Ok(PropositionReport { eta, samples, triangle_violations, bound_violations, max_ratio })
}
