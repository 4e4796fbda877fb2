use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// How the closeness bound η on a candidate experiment is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaMode {
    /// `z*_u · |P′| / |P|`.
    #[default]
    Ratio,
    /// The `1 − α` quantile of `χ²` with `|P′|` degrees of freedom.
    Chi2,
    /// [`EtaRule::value`].
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EtaRule {
    pub mode: EtaMode,
    /// 1 applies the bound as stated; 4 uses the looser `4η` form.
    pub multiplier: f64,
    /// Level for [`EtaMode::Chi2`].
    pub alpha: f64,
    /// Required for [`EtaMode::Fixed`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl Default for EtaRule {
    fn default() -> Self {
        Self { mode: EtaMode::Ratio, multiplier: 1.0, alpha: 0.05, value: None }
    }
}

/// `z*_u · |P′| / |P|`, both counts including replicates.
pub fn eta_default(z_upper: f64, candidate_count: usize, completed_count: usize) -> Result<f64> {
    if completed_count == 0 {
        return Err(Error::InvalidInput("no completed observations to scale eta by".into()));
    }
    Ok(z_upper * candidate_count as f64 / completed_count as f64)
}

/// Upper `α` quantile of `χ²_k`.
pub fn eta_chi2(candidate_count: usize, alpha: f64) -> Result<f64> {
    if candidate_count == 0 {
        return Ok(0.0);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let chi = ChiSquared::new(candidate_count as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(chi.inverse_cdf(1.0 - alpha))
}

impl EtaRule {
    pub fn resolve(&self, z_upper: f64, candidate_count: usize, completed_count: usize) -> Result<f64> {
        if !(self.multiplier > 0.0) {
            return Err(Error::Config(format!("eta multiplier must be positive, got {}", self.multiplier)));
        }
        let base = match self.mode {
            EtaMode::Ratio => eta_default(z_upper, candidate_count, completed_count)?,
            EtaMode::Chi2 => eta_chi2(candidate_count, self.alpha)?,
            EtaMode::Fixed => match self.value {
                Some(v) if v >= 0.0 => v,
                Some(v) => return Err(Error::Config(format!("fixed eta must be non-negative, got {v}"))),
                None => return Err(Error::Config("fixed eta mode needs a value".into())),
            },
        };
        Ok(self.multiplier * base)
    }
}
