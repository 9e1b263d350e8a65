//! Iterative convex machinery over oracle sets.

pub mod dykstra;
pub mod cp;
pub mod logistic;
pub mod support;

use serde::{Deserialize, Serialize};

use crate::error::{ConeError, Result};

/// Tolerances and iteration caps shared by the iterative solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Iteration cap of a single inner solve.
    pub max_iters: usize,
    /// Convergence tolerance (relative objective decrease or displacement).
    pub tol: f64,
    /// Slack on variational-inequality checks.
    pub kkt_tol: f64,
    /// Distance below which a point counts as lying in a set.
    pub dist_tol: f64,
    /// Penalty weights for the penalty-continuation preimage oracle.
    pub penalty_schedule: Vec<f64>,
    /// Ascent step of the support-function solver.
    pub step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 5000,
            tol: 1e-10,
            kkt_tol: 1e-6,
            dist_tol: 1e-6,
            penalty_schedule: vec![1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8],
            step: 0.5,
        }
    }
}

impl SolverOptions {
    /// Checks `0 < tol < dist_tol < 1` and positivity of the remaining fields.
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(ConeError::invalid("max_iters", "must be positive"));
        }
        if !(self.tol > 0.0 && self.tol < self.dist_tol && self.dist_tol < 1.0) {
            return Err(ConeError::invalid(
                "tol",
                format!("need 0 < tol < dist_tol < 1, got tol={} dist_tol={}", self.tol, self.dist_tol),
            ));
        }
        if !(self.kkt_tol > 0.0 && self.kkt_tol.is_finite()) {
            return Err(ConeError::invalid("kkt_tol", "must be positive"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(ConeError::invalid("step", "must be positive"));
        }
        if self.penalty_schedule.is_empty()
            || self.penalty_schedule.iter().any(|p| !(*p > 0.0 && p.is_finite()))
        {
            return Err(ConeError::invalid("penalty_schedule", "needs positive finite weights"));
        }
        Ok(())
    }
}
