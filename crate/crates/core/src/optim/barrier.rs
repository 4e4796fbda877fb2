use serde::{Deserialize, Serialize};

use super::newton::{newton_cg, Evaluation, NewtonCgOptions, Objective};

/// Objective and constraint values `g_i(x) ≤ b_i` at one point, with
/// optional first derivatives and positive semidefinite curvature
/// approximations (row-major).
#[derive(Clone, Debug, Default)]
pub struct ConstrainedEval {
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub objective_gradient: Vec<f64>,
    pub objective_curvature: Vec<f64>,
    pub constraint_gradients: Vec<Vec<f64>>,
    pub constraint_curvatures: Vec<Vec<f64>>,
}

/// `maximize f(x)  s.t.  g_i(x) ≤ b_i`.
pub trait ConstrainedProblem: Sync {
    fn dim(&self) -> usize;
    fn bounds(&self) -> &[f64];
    /// `None` when the point cannot be evaluated. Derivative fields may be
    /// left empty when `derivatives` is false.
    fn evaluate(&self, x: &[f64], derivatives: bool) -> Option<ConstrainedEval>;
    /// Componentwise limits on `x`, passed to the inner minimizer.
    fn box_bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarrierOptions {
    /// Initial weight; `None` uses `max(1, f(x0)/100)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    pub mu_factor: f64,
    pub outer_iterations: usize,
    /// Inner solves stop at gradient norm `inner_gtol · μ`.
    pub inner_gtol: f64,
    pub inner_max_iter: usize,
    pub max_step: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self { mu0: None, mu_factor: 0.2, outer_iterations: 8, inner_gtol: 1e-5, inner_max_iter: 100, max_step: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct BarrierOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub inner_iterations: usize,
    /// Objective after each outer iteration.
    pub history: Vec<f64>,
}

struct BarrierObjective<'a, P: ConstrainedProblem + ?Sized> {
    problem: &'a P,
    mu: f64,
}

impl<P: ConstrainedProblem + ?Sized> BarrierObjective<'_, P> {
    fn combine(&self, e: &ConstrainedEval) -> f64 {
        let mut v = -e.objective;
        for (g, b) in e.constraints.iter().zip(self.problem.bounds()) {
            let slack = b - g;
            if !(slack > 0.0) {
                return f64::INFINITY;
            }
            v -= self.mu * slack.ln();
        }
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }
}

impl<P: ConstrainedProblem + ?Sized> Objective for BarrierObjective<'_, P> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.problem.evaluate(x, false).map_or(f64::INFINITY, |e| self.combine(&e))
    }

    fn evaluate(&self, x: &[f64]) -> Option<Evaluation> {
        let e = self.problem.evaluate(x, true)?;
        let value = self.combine(&e);
        if !value.is_finite() {
            return None;
        }
        let n = x.len();
        let mut gradient: Vec<f64> = e.objective_gradient.iter().map(|g| -g).collect();
        let mut curvature: Vec<f64> = e.objective_curvature.iter().map(|h| -h).collect();
        for (i, b) in self.problem.bounds().iter().enumerate() {
            let slack = b - e.constraints[i];
            let gg = &e.constraint_gradients[i];
            let hh = &e.constraint_curvatures[i];
            for r in 0..n {
                gradient[r] += self.mu * gg[r] / slack;
                for c in 0..n {
                    curvature[r * n + c] += self.mu * (hh[r * n + c] / slack + gg[r] * gg[c] / (slack * slack));
                }
            }
        }
        Some(Evaluation { value, gradient, curvature: Some(curvature) })
    }

    fn box_bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        self.problem.box_bounds()
    }
}

/// Logarithmic-barrier maximization from a strictly feasible `x0`.
/// Returns `None` when `x0` is not strictly feasible.
pub fn maximize_with_barrier<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    opts: &BarrierOptions,
) -> Option<BarrierOutcome> {
    let start = problem.evaluate(x0, false)?;
    if start.constraints.iter().zip(problem.bounds()).any(|(g, b)| !(g < b)) || !start.objective.is_finite() {
        return None;
    }
    let mut mu = opts.mu0.unwrap_or_else(|| (start.objective / 100.0).max(1.0));
    let mut x = x0.to_vec();
    let mut inner_iterations = 0;
    let mut history = Vec::with_capacity(opts.outer_iterations);
    for _ in 0..opts.outer_iterations {
        let obj = BarrierObjective { problem, mu };
        let inner = NewtonCgOptions {
            max_iter: opts.inner_max_iter,
            gtol: 0.0,
            gtol_abs: Some(opts.inner_gtol * mu),
            ftol_rel: 1e-12,
            max_step: opts.max_step,
        };
        let r = newton_cg(&obj, &x, &inner);
        inner_iterations += r.iterations;
        if r.value.is_finite() {
            x = r.x;
        }
        let e = problem.evaluate(&x, false)?;
        history.push(e.objective);
        mu *= opts.mu_factor;
    }
    let e = problem.evaluate(&x, false)?;
    Some(BarrierOutcome { x, objective: e.objective, constraints: e.constraints, inner_iterations, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// maximize x + y on the unit disk; optimum at (1/√2, 1/√2).
    struct Disk {
        bounds: Vec<f64>,
    }

    impl ConstrainedProblem for Disk {
        fn dim(&self) -> usize {
            2
        }
        fn bounds(&self) -> &[f64] {
            &self.bounds
        }
        fn evaluate(&self, x: &[f64], derivatives: bool) -> Option<ConstrainedEval> {
            let mut e = ConstrainedEval {
                objective: x[0] + x[1],
                constraints: vec![x[0] * x[0] + x[1] * x[1]],
                ..Default::default()
            };
            if derivatives {
                e.objective_gradient = vec![1.0, 1.0];
                e.objective_curvature = vec![0.0; 4];
                e.constraint_gradients = vec![vec![2.0 * x[0], 2.0 * x[1]]];
                e.constraint_curvatures = vec![vec![2.0, 0.0, 0.0, 2.0]];
            }
            Some(e)
        }
    }

    #[test]
    fn disk_maximum() {
        let p = Disk { bounds: vec![1.0] };
        let out = maximize_with_barrier(&p, &[0.0, 0.0], &BarrierOptions::default()).unwrap();
        assert!(out.constraints[0] < 1.0);
        assert!((out.objective - 2f64.sqrt()).abs() < 1e-4, "{}", out.objective);
    }

    #[test]
    fn infeasible_start_rejected() {
        let p = Disk { bounds: vec![1.0] };
        assert!(maximize_with_barrier(&p, &[1.0, 1.0], &BarrierOptions::default()).is_none());
    }
}
