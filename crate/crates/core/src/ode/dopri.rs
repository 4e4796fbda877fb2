//! Dormand–Prince 5(4) with the 4th-order continuous extension for
//! reporting at arbitrary grid points.

use super::{FailureReason, IntegrationFailure, Tolerances};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Adaptive explicit integrator for `dy/dt = f(t, y)` starting at `t = 0`.
#[derive(Clone, Debug)]
pub struct Dopri5 {
    dim: usize,
    tol: Tolerances,
}

impl Dopri5 {
    pub fn new(dim: usize, tol: Tolerances) -> Self {
        Self { dim, tol }
    }

    /// Solve from `t = 0` and return the flat states at `times` (ascending,
    /// non-negative) plus a failure record if integration stopped early.
    pub fn solve<F>(&self, mut f: F, y0: &[f64], times: &[f64]) -> (Vec<f64>, Option<IntegrationFailure>)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = self.dim;
        let mut out = vec![f64::NAN; times.len() * n];
        let mut next = 0;
        while next < times.len() && times[next] <= 0.0 {
            out[next * n..(next + 1) * n].copy_from_slice(y0);
            next += 1;
        }
        if next == times.len() {
            return (out, None);
        }
        let fail = |t: f64, reason| Some(IntegrationFailure { last_time: t, reason });
        if y0.iter().any(|v| !v.is_finite()) {
            return (out, fail(0.0, FailureReason::NonFinite));
        }

        let t_end = times[times.len() - 1];
        let mut y = y0.to_vec();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut k5 = vec![0.0; n];
        let mut k6 = vec![0.0; n];
        let mut k7 = vec![0.0; n];
        let mut ys = vec![0.0; n];
        let mut y_new = vec![0.0; n];
        let mut rc5 = vec![0.0; n];

        f(0.0, &y, &mut k1);
        if k1.iter().any(|v| !v.is_finite()) {
            return (out, fail(0.0, FailureReason::NonFinite));
        }

        let mut t = 0.0;
        let mut h = self.initial_step(&mut f, &y, &k1, t_end, &mut ys, &mut k2);
        let mut steps = 0usize;
        let mut last_reject = false;
        let mut last_nonfinite = false;

        while next < times.len() {
            if steps >= self.tol.max_steps {
                return (out, fail(t, FailureReason::MaxSteps));
            }
            if h < 1e-14 * t.abs().max(1.0) {
                let reason = if last_nonfinite { FailureReason::NonFinite } else { FailureReason::StepUnderflow };
                return (out, fail(t, reason));
            }
            let last = t + h >= t_end - 1e-12 * t_end.abs().max(1.0);
            if last {
                h = t_end - t;
            }
            steps += 1;

            for i in 0..n {
                ys[i] = y[i] + h * A21 * k1[i];
            }
            f(t + C2 * h, &ys, &mut k2);
            for i in 0..n {
                ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h, &ys, &mut k3);
            for i in 0..n {
                ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h, &ys, &mut k4);
            for i in 0..n {
                ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h, &ys, &mut k5);
            for i in 0..n {
                ys[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_new = if last { t_end } else { t + h };
            f(t_new, &ys, &mut k6);
            for i in 0..n {
                y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(t_new, &y_new, &mut k7);

            let mut err = 0.0;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sk = self.tol.atol + self.tol.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sk) * (e / sk);
            }
            let err = (err / n as f64).sqrt();

            if !err.is_finite() || k7.iter().any(|v| !v.is_finite()) {
                h *= FAC_MIN;
                last_reject = true;
                last_nonfinite = true;
                continue;
            }
            last_nonfinite = false;

            if err <= 1.0 {
                // Emit grid points inside (t, t_new].
                let mut dense_ready = false;
                while next < times.len() && times[next] <= t_new {
                    let s = times[next];
                    let row = &mut out[next * n..(next + 1) * n];
                    if s == t_new {
                        row.copy_from_slice(&y_new);
                    } else {
                        if !dense_ready {
                            for i in 0..n {
                                rc5[i] =
                                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                            }
                            dense_ready = true;
                        }
                        let th = (s - t) / h;
                        let th1 = 1.0 - th;
                        for i in 0..n {
                            let r2 = y_new[i] - y[i];
                            let r3 = h * k1[i] - r2;
                            let r4 = r2 - h * k7[i] - r3;
                            row[i] = y[i] + th * (r2 + th1 * (r3 + th * (r4 + th1 * rc5[i])));
                        }
                    }
                    next += 1;
                }
                t = t_new;
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(&mut k1, &mut k7);
                let mut fac = SAFETY * err.max(1e-10).powf(-0.2);
                fac = fac.clamp(FAC_MIN, if last_reject { 1.0 } else { FAC_MAX });
                h *= fac;
                last_reject = false;
            } else {
                h *= (SAFETY * err.powf(-0.2)).max(FAC_MIN);
                last_reject = true;
            }
        }
        (out, None)
    }

    fn initial_step<F>(&self, f: &mut F, y0: &[f64], f0: &[f64], h_max: f64, y1: &mut [f64], f1: &mut [f64]) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = self.dim;
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..n {
            let sk = self.tol.atol + self.tol.rtol * y0[i].abs();
            dnf += (f0[i] / sk).powi(2);
            dny += (y0[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
        h = h.min(h_max);
        for i in 0..n {
            y1[i] = y0[i] + h * f0[i];
        }
        f(h, y1, f1);
        let mut der2 = 0.0;
        for i in 0..n {
            let sk = self.tol.atol + self.tol.rtol * y0[i].abs();
            der2 += ((f1[i] - f0[i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if !der12.is_finite() {
            h * 1e-3
        } else if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(0.2)
        };
        (100.0 * h).min(h1).min(h_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_dense_output() {
        // y'' = -y, y(0) = 0, y'(0) = 1 → y = sin t.
        let solver = Dopri5::new(2, Tolerances::fitting());
        let times: Vec<f64> = (1..=40).map(|k| k as f64 * 0.25).collect();
        let (out, fail) = solver.solve(
            |_t, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[0.0, 1.0],
            &times,
        );
        assert!(fail.is_none());
        for (k, t) in times.iter().enumerate() {
            assert!((out[2 * k] - t.sin()).abs() < 1e-7, "t={t}");
            assert!((out[2 * k + 1] - t.cos()).abs() < 1e-7, "t={t}");
        }
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = 2t → y = t².
        let solver = Dopri5::new(1, Tolerances::fitting());
        let (out, _) = solver.solve(|t, _y, dy| dy[0] = 2.0 * t, &[0.0], &[0.3, 1.7, 3.0]);
        for (v, t) in out.iter().zip([0.3f64, 1.7, 3.0]) {
            assert!((v - t * t).abs() < 1e-9);
        }
    }

    #[test]
    fn max_steps_reported() {
        let tol = Tolerances { rtol: 1e-12, atol: 1e-14, max_steps: 5 };
        let (_, fail) = Dopri5::new(1, tol).solve(|t, _y, dy| dy[0] = (50.0 * t).sin(), &[0.0], &[10.0]);
        assert_eq!(fail.unwrap().reason, FailureReason::MaxSteps);
    }
}
