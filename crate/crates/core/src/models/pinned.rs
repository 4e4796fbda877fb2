use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ode::{ExternalFactors, ModelSystem};

/// Holds a subset of a model's parameters at known values and exposes the
/// rest as the free parameter vector.
pub struct Pinned {
    inner: Arc<dyn ModelSystem>,
    /// Full-length template; free slots are overwritten on every call.
    template: Vec<f64>,
    free: Vec<usize>,
    names: Vec<String>,
}

impl Pinned {
    /// `fixed` lists `(parameter name, value)` pairs.
    pub fn new(inner: Arc<dyn ModelSystem>, fixed: &[(String, f64)]) -> Result<Self> {
        let all = inner.param_names();
        let mut template = vec![f64::NAN; all.len()];
        for (name, value) in fixed {
            let idx = all
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Config(format!("cannot pin unknown parameter '{name}'")))?;
            template[idx] = *value;
        }
        let free: Vec<usize> = (0..all.len()).filter(|&i| template[i].is_nan()).collect();
        if free.is_empty() {
            return Err(Error::Config("every parameter is pinned; nothing left to estimate".into()));
        }
        let names = free.iter().map(|&i| all[i].clone()).collect();
        Ok(Self { inner, template, free, names })
    }

    /// Full parameter vector for a free one.
    pub fn expand(&self, theta: &[f64]) -> Vec<f64> {
        let mut full = self.template.clone();
        for (&i, &v) in self.free.iter().zip(theta) {
            full[i] = v;
        }
        full
    }

    pub fn inner(&self) -> &Arc<dyn ModelSystem> {
        &self.inner
    }

    fn with_full<R>(&self, theta: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
        const STACK: usize = 32;
        if self.template.len() <= STACK {
            let mut buf = [0.0; STACK];
            let full = &mut buf[..self.template.len()];
            full.copy_from_slice(&self.template);
            for (&i, &v) in self.free.iter().zip(theta) {
                full[i] = v;
            }
            f(full)
        } else {
            f(&self.expand(theta))
        }
    }

    fn select_columns(&self, full: &[f64], out: &mut [f64]) {
        let pf = self.template.len();
        let p = self.free.len();
        for r in 0..self.inner.state_dim() {
            for (c, &k) in self.free.iter().enumerate() {
                out[r * p + c] = full[r * pf + k];
            }
        }
    }
}

impl ModelSystem for Pinned {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn param_dim(&self) -> usize {
        self.free.len()
    }
    fn state_names(&self) -> &[String] {
        self.inner.state_names()
    }
    fn param_names(&self) -> &[String] {
        &self.names
    }
    fn factor_names(&self) -> &[String] {
        self.inner.factor_names()
    }

    fn rhs(&self, t: f64, x: &[f64], theta: &[f64], nu: &ExternalFactors, dx: &mut [f64]) {
        self.with_full(theta, |th| self.inner.rhs(t, x, th, nu, dx));
    }

    fn jacobian_state(&self, t: f64, x: &[f64], theta: &[f64], nu: &ExternalFactors, jac: &mut [f64]) {
        self.with_full(theta, |th| self.inner.jacobian_state(t, x, th, nu, jac));
    }

    fn jacobian_params(&self, t: f64, x: &[f64], theta: &[f64], nu: &ExternalFactors, jac: &mut [f64]) {
        let n = self.inner.state_dim();
        let pf = self.template.len();
        const STACK: usize = 256;
        if n * pf <= STACK {
            let mut buf = [0.0; STACK];
            self.with_full(theta, |th| self.inner.jacobian_params(t, x, th, nu, &mut buf[..n * pf]));
            self.select_columns(&buf[..n * pf], jac);
        } else {
            let mut full = vec![0.0; n * pf];
            self.with_full(theta, |th| self.inner.jacobian_params(t, x, th, nu, &mut full));
            self.select_columns(&full, jac);
        }
    }

    fn initial_state(&self, theta: &[f64], nu: &ExternalFactors, x0: &mut [f64]) {
        self.with_full(theta, |th| self.inner.initial_state(th, nu, x0));
    }

    fn initial_sensitivity(&self, theta: &[f64], nu: &ExternalFactors, s0: &mut [f64]) {
        let mut full = vec![0.0; self.inner.state_dim() * self.template.len()];
        self.with_full(theta, |th| self.inner.initial_sensitivity(th, nu, &mut full));
        self.select_columns(&full, s0);
    }
}
