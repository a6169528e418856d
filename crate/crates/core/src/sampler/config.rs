use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Initial proposal scales. `None` selects the optimal-scaling defaults
/// `2.38 / sqrt(d)` for block proposals and `1` for single-site proposals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub beta: Option<f64>,
    pub effects: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt: bool,
    pub target_accept_multivariate: f64,
    pub target_accept_univariate: f64,
    pub initial_step_sizes: StepSizes,
    /// Drop the likelihood and sample from the prior.
    pub prior_only: bool,
    /// Hold `tau` at this value instead of updating it.
    pub fixed_tau: Option<f64>,
    /// Hold `sigma2` at this value instead of updating it.
    pub fixed_sigma2: Option<f64>,
    /// Keep random-effect draws in the in-memory chain. Streaming sinks
    /// always receive every column.
    pub retain_effects: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 100_000,
            burn_in: 10_000,
            thin: 10,
            seed: 0,
            adapt: true,
            target_accept_multivariate: 0.234,
            target_accept_univariate: 0.44,
            initial_step_sizes: StepSizes::default(),
            prior_only: false,
            fixed_tau: None,
            fixed_sigma2: None,
            retain_effects: true,
        }
    }
}

impl McmcConfig {
    pub fn with_seed(seed: u64) -> Self {
        McmcConfig {
            seed,
            ..Default::default()
        }
    }

    /// Number of retained draws.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidArgument(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        for (name, v) in [
            ("target_accept_multivariate", self.target_accept_multivariate),
            ("target_accept_univariate", self.target_accept_univariate),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        let optional = [
            ("initial_step_sizes.beta", self.initial_step_sizes.beta),
            ("initial_step_sizes.effects", self.initial_step_sizes.effects),
            ("fixed_tau", self.fixed_tau),
            ("fixed_sigma2", self.fixed_sigma2),
        ];
        for (name, v) in optional {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::NonPositive { name: name.into(), value: v });
                }
            }
        }
        Ok(())
    }
}
