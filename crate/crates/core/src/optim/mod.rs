//! Unconstrained truncated Newton–CG and a logarithmic-barrier driver built
//! on it, plus the parameter-space transform used by every optimizer.

mod barrier;
mod newton;
pub(crate) mod space;

pub use barrier::{maximize_with_barrier, BarrierOptions, BarrierOutcome, ConstrainedEval, ConstrainedProblem};
pub use newton::{newton_cg, Evaluation, MinimizeResult, NewtonCgOptions, Objective, Status};
pub use space::{ParamRange, ParamSpace, Scale};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y = M x` for a row-major square matrix.
pub(crate) fn mat_vec(m: &[f64], x: &[f64], y: &mut [f64]) {
    let n = x.len();
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = dot(&m[i * n..(i + 1) * n], x);
    }
}
