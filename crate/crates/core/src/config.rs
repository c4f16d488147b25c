//! Training configuration shared by every worker of a run.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid config: {field}: {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

fn bad(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        field,
        reason: reason.into(),
    }
}

/// Hyperparameters and run shape. Every worker must hold an identical copy;
/// the driver's determinism depends on it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Slack penalty weight of the primal objective.
    pub c: f64,
    /// Surrogate Hessian scaling; conservative default is the worker count.
    pub theta: f64,
    /// Ridge scale: effective ridge = lambda_scale * (theta * max ||phi||^2 + 1/(2c)).
    pub lambda_scale: f64,
    /// Weight-space dimension exponent, dims = 2^hash_bits.
    pub hash_bits: u32,
    pub workers: usize,
    /// Coordinate-descent epochs per direction solve.
    pub inner_epochs: usize,
    pub outer_iters: usize,
    /// Run constraint search every this many outer iterations.
    pub inference_interval: usize,
    /// A structure joins the working set only if its violation exceeds the
    /// instance slack by more than this.
    pub ws_violation_tol: f64,
    pub rng_seed: u64,
}

impl TrainConfig {
    /// Defaults for a cluster of `workers`; theta follows the worker count.
    pub fn for_workers(workers: usize) -> Self {
        TrainConfig {
            c: 0.1,
            theta: workers.max(1) as f64,
            lambda_scale: 1e-4,
            hash_bits: 18,
            workers,
            inner_epochs: 10,
            outer_iters: 100,
            inference_interval: 1,
            ws_violation_tol: 1e-3,
            rng_seed: 42,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(bad("c", format!("must be positive and finite, got {}", self.c)));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(bad("theta", format!("must be positive and finite, got {}", self.theta)));
        }
        if !(self.lambda_scale > 0.0 && self.lambda_scale.is_finite()) {
            return Err(bad(
                "lambda_scale",
                format!("must be positive and finite, got {}", self.lambda_scale),
            ));
        }
        if !(10..=30).contains(&self.hash_bits) {
            return Err(bad(
                "hash_bits",
                format!("must be in [10, 30], got {}", self.hash_bits),
            ));
        }
        if self.workers == 0 {
            return Err(bad("workers", "must be at least 1"));
        }
        if self.inner_epochs == 0 {
            return Err(bad("inner_epochs", "must be at least 1"));
        }
        if self.outer_iters == 0 {
            return Err(bad("outer_iters", "must be at least 1"));
        }
        if self.inference_interval == 0 {
            return Err(bad("inference_interval", "must be at least 1"));
        }
        if !(self.ws_violation_tol > 0.0 && self.ws_violation_tol.is_finite()) {
            return Err(bad(
                "ws_violation_tol",
                format!("must be positive and finite, got {}", self.ws_violation_tol),
            ));
        }
        Ok(())
    }
}
