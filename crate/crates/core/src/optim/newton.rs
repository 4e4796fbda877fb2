use serde::{Deserialize, Serialize};

use super::{dot, mat_vec, norm};

/// Value, gradient and (optionally) a curvature matrix at one point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major `dim × dim` Hessian or Hessian approximation. When absent,
    /// Hessian–vector products are taken by differencing gradients.
    pub curvature: Option<Vec<f64>>,
}

/// A smooth function to minimize. Failed evaluations (for example an ODE
/// that blew up) return `+∞` / `None`.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn evaluate(&self, x: &[f64]) -> Option<Evaluation>;
    /// Componentwise `(lower, upper)` limits on `x`; `None` when unbounded.
    fn box_bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonCgOptions {
    pub max_iter: usize,
    /// Converged when `‖g‖ ≤ gtol · max(1, |f|)`.
    pub gtol: f64,
    /// Absolute gradient tolerance, checked in addition to `gtol`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gtol_abs: Option<f64>,
    /// Converged when the accepted decrease is below `ftol_rel · max(1, |f|)`.
    pub ftol_rel: f64,
    /// Longest step allowed in one iteration.
    pub max_step: f64,
}

impl Default for NewtonCgOptions {
    fn default() -> Self {
        Self { max_iter: 500, gtol: 1e-6, gtol_abs: None, ftol_rel: 1e-10, max_step: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    GradientTolerance,
    FunctionTolerance,
    /// No decrease found along the search direction.
    Stalled,
    MaxIterations,
    /// The starting point could not be evaluated.
    Failed,
}

impl Status {
    pub fn converged(self) -> bool {
        matches!(self, Status::GradientTolerance | Status::FunctionTolerance | Status::Stalled)
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub status: Status,
}

impl MinimizeResult {
    pub fn converged(&self) -> bool {
        self.status.converged()
    }
}

struct Curvature<'a, O: Objective + ?Sized> {
    obj: &'a O,
    x: &'a [f64],
    eval: &'a Evaluation,
    scale: f64,
    /// Coordinates held at a bound; the system is solved on the rest.
    fixed: &'a [bool],
}

impl<O: Objective + ?Sized> Curvature<'_, O> {
    fn apply(&self, v: &[f64], out: &mut [f64]) -> bool {
        let ok = self.apply_full(v, out);
        for (o, &f) in out.iter_mut().zip(self.fixed) {
            if f {
                *o = 0.0;
            }
        }
        ok
    }

    fn apply_full(&self, v: &[f64], out: &mut [f64]) -> bool {
        match &self.eval.curvature {
            Some(m) => {
                mat_vec(m, v, out);
                true
            }
            None => {
                let nv = norm(v);
                if nv == 0.0 {
                    out.fill(0.0);
                    return true;
                }
                let h = 1e-6 * (1.0 + norm(self.x)) / nv;
                let xp: Vec<f64> = self.x.iter().zip(v).map(|(a, b)| a + h * b).collect();
                match self.obj.evaluate(&xp) {
                    Some(e) => {
                        for ((o, gp), g) in out.iter_mut().zip(&e.gradient).zip(&self.eval.gradient) {
                            *o = (gp - g) / h;
                        }
                        true
                    }
                    None => false,
                }
            }
        }
    }
}

/// Truncated CG on `H d = −g`. Returns the direction and whether it came
/// from the steepest-descent fallback.
fn cg_direction<O: Objective + ?Sized>(c: &Curvature<'_, O>, g: &[f64]) -> (Vec<f64>, bool) {
    let n = g.len();
    let gnorm = norm(g);
    let tol = gnorm.sqrt().min(0.5) * gnorm;
    let mut z = vec![0.0; n];
    let mut r = g.to_vec();
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut bd = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for j in 0..(2 * n).max(10) {
        if !c.apply(&d, &mut bd) {
            return if j == 0 { (d, true) } else { (z, false) };
        }
        let dbd = dot(&d, &bd);
        if !(dbd > 1e-12 * c.scale * dot(&d, &d)) {
            return if j == 0 { (g.iter().map(|v| -v).collect(), true) } else { (z, false) };
        }
        let a = rr / dbd;
        for i in 0..n {
            z[i] += a * d[i];
            r[i] += a * bd[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() < tol {
            break;
        }
        let beta = rr_new / rr;
        for i in 0..n {
            d[i] = -r[i] + beta * d[i];
        }
        rr = rr_new;
    }
    (z, false)
}

/// Minimize `obj` from `x0` with a line-search Newton–CG method. With box
/// bounds the iterates are projected onto the box and coordinates pinned at
/// a bound by the gradient are held fixed for the step.
pub fn newton_cg<O: Objective + ?Sized>(obj: &O, x0: &[f64], opts: &NewtonCgOptions) -> MinimizeResult {
    let bounds = obj.box_bounds();
    let project = |x: &mut [f64]| {
        if let Some((lo, hi)) = &bounds {
            for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
                *v = v.clamp(*l, *h);
            }
        }
    };
    let mut x = x0.to_vec();
    project(&mut x);
    let Some(mut eval) = obj.evaluate(&x).filter(|e| e.value.is_finite()) else {
        return MinimizeResult {
            x,
            value: f64::INFINITY,
            gradient_norm: f64::NAN,
            iterations: 0,
            status: Status::Failed,
        };
    };
    let pinned = |x: &[f64], g: &[f64]| -> Vec<bool> {
        match &bounds {
            Some((lo, hi)) => {
                (0..x.len()).map(|i| (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)).collect()
            }
            None => vec![false; x.len()],
        }
    };
    let mut last_step = 0.1 * opts.max_step;
    let mut iterations = 0;
    let status = loop {
        let f = eval.value;
        let fixed = pinned(&x, &eval.gradient);
        let g: Vec<f64> = eval.gradient.iter().zip(&fixed).map(|(&v, &p)| if p { 0.0 } else { v }).collect();
        let gnorm = norm(&g);
        if gnorm <= opts.gtol * f.abs().max(1.0) || opts.gtol_abs.is_some_and(|t| gnorm <= t) {
            break Status::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break Status::MaxIterations;
        }
        iterations += 1;

        let scale = eval
            .curvature
            .as_ref()
            .map(|m| (0..x.len()).map(|i| m[i * x.len() + i].abs()).fold(0.0, f64::max))
            .unwrap_or(1.0)
            .max(f64::MIN_POSITIVE);
        let curv = Curvature { obj, x: &x, eval: &eval, scale, fixed: &fixed };
        let (mut d, steepest) = cg_direction(&curv, &g);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut dn = norm(&d);
        let target = if steepest || slope == -gnorm * gnorm {
            (2.0 * last_step).clamp(1e-8, opts.max_step)
        } else {
            opts.max_step
        };
        if dn > target {
            let s = target / dn;
            d.iter_mut().for_each(|v| *v *= s);
            dn = target;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            project(&mut xt);
            let moved: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &moved);
            if decrease < 0.0 {
                let ft = obj.value(&xt);
                if ft.is_finite() && ft <= f + 1e-4 * decrease {
                    accepted = Some((xt, ft, norm(&moved)));
                    break;
                }
            }
            alpha *= 0.5;
            if alpha * dn < 1e-15 * (1.0 + norm(&x)) {
                break;
            }
        }
        let Some((xt, ft, step)) = accepted else {
            break Status::Stalled;
        };
        let Some(e) = obj.evaluate(&xt).filter(|e| e.value.is_finite()) else {
            break Status::Stalled;
        };
        last_step = step;
        x = xt;
        eval = e;
        if f - ft <= opts.ftol_rel * f.abs().max(1.0) {
            break Status::FunctionTolerance;
        }
    };
    let fixed = pinned(&x, &eval.gradient);
    let gradient_norm =
        norm(&eval.gradient.iter().zip(&fixed).map(|(&v, &p)| if p { 0.0 } else { v }).collect::<Vec<_>>());
    MinimizeResult { x, value: eval.value, gradient_norm, iterations, status }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock {
        exact_hessian: bool,
    }

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn evaluate(&self, x: &[f64]) -> Option<Evaluation> {
            let (a, b) = (x[0], x[1]);
            let gradient = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            let curvature =
                self.exact_hessian.then(|| vec![2.0 - 400.0 * (b - 3.0 * a * a), -400.0 * a, -400.0 * a, 200.0]);
            Some(Evaluation { value: self.value(x), gradient, curvature })
        }
    }

    #[test]
    fn rosenbrock_exact_hessian() {
        let r = newton_cg(&Rosenbrock { exact_hessian: true }, &[-1.2, 1.0], &NewtonCgOptions::default());
        assert!(r.converged(), "{:?}", r.status);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn rosenbrock_gradient_differences() {
        let r = newton_cg(&Rosenbrock { exact_hessian: false }, &[-1.2, 1.0], &NewtonCgOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    struct Saddle;

    impl Objective for Saddle {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            // Negative curvature along x[1] near the origin, bounded below.
            x[0] * x[0] - x[1] * x[1] + 0.25 * x[1].powi(4)
        }
        fn evaluate(&self, x: &[f64]) -> Option<Evaluation> {
            Some(Evaluation {
                value: self.value(x),
                gradient: vec![2.0 * x[0], -2.0 * x[1] + x[1].powi(3)],
                curvature: Some(vec![2.0, 0.0, 0.0, -2.0 + 3.0 * x[1] * x[1]]),
            })
        }
    }

    #[test]
    fn escapes_negative_curvature() {
        let r = newton_cg(&Saddle, &[0.5, 0.01], &NewtonCgOptions::default());
        assert!((r.x[1].abs() - 2f64.sqrt()).abs() < 1e-5, "{:?}", r.x);
        assert!(r.x[0].abs() < 1e-5);
    }

    struct Wall;

    impl Objective for Wall {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &[f64]) -> f64 {
            if x[0] > 1.0 {
                f64::INFINITY
            } else {
                (x[0] - 2.0).powi(2)
            }
        }
        fn evaluate(&self, x: &[f64]) -> Option<Evaluation> {
            let v = self.value(x);
            v.is_finite().then(|| Evaluation {
                value: v,
                gradient: vec![2.0 * (x[0] - 2.0)],
                curvature: Some(vec![2.0]),
            })
        }
    }

    #[test]
    fn failed_region_is_avoided() {
        let r = newton_cg(&Wall, &[0.0], &NewtonCgOptions::default());
        assert!(r.x[0] <= 1.0 && r.x[0] > 0.99, "{:?}", r.x);
        assert!(r.value.is_finite());
    }
}
