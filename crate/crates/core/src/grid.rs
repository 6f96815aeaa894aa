//! Uniform time/maturity grid shared by the solver and the curve representation.
//!
//! The solver contract ties the time step to the maturity spacing so that the
//! shift semigroup acts as an exact index shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    step: f64,
    n_t: usize,
    n_xi: usize,
}

fn steps_of(len: f64, step: f64, what: &str) -> Result<usize> {
    let q = len / step;
    let n = q.round();
    if !(q.is_finite()) || (q - n).abs() > 1e-6 * n.max(1.0) {
        return Err(Error::Grid(format!(
            "{what} {len} is not a multiple of the step {step}"
        )));
    }
    Ok(n as usize)
}

impl Grid {
    /// Builds a grid from the common step and the two horizons.
    pub fn new(step: f64, horizon_t: f64, horizon_xi: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Grid(format!("step must be positive, got {step}")));
        }
        if !(horizon_t >= 0.0) || !(horizon_xi > 0.0) {
            return Err(Error::Grid("horizons must be nonnegative".into()));
        }
        let n_t = steps_of(horizon_t, step, "time horizon")?;
        let n_xi = steps_of(horizon_xi, step, "maturity horizon")?;
        if n_xi <= n_t {
            return Err(Error::Grid(format!(
                "maturity horizon {horizon_xi} must exceed the time horizon {horizon_t}"
            )));
        }
        Ok(Grid { step, n_t, n_xi })
    }

    pub fn from_counts(step: f64, n_t: usize, n_xi: usize) -> Result<Self> {
        Grid::new(step, step * n_t as f64, step * n_xi as f64)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of time steps.
    pub fn n_t(&self) -> usize {
        self.n_t
    }

    /// Number of derivative samples per curve.
    pub fn n_xi(&self) -> usize {
        self.n_xi
    }

    pub fn horizon_t(&self) -> f64 {
        self.step * self.n_t as f64
    }

    pub fn horizon_xi(&self) -> f64 {
        self.step * self.n_xi as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.step * k as f64
    }

    /// Index of `x` on the grid if it sits on a node.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let q = x / self.step;
        let n = q.round();
        if n >= 0.0 && (q - n).abs() <= 1e-6 {
            Some(n as usize)
        } else {
            None
        }
    }
}
