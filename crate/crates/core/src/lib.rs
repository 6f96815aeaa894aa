//! Real-world Heath-Jarrow-Morton models for several coexisting term structures.
//!
//! The crate covers forward curves in weighted Filipović spaces, the drift
//! restrictions that make a minimal deflator exist, a mild Euler scheme for
//! the Musiela equation with Brownian and compound-Poisson noise, ordering
//! (cone) checks, the exponential-volatility affine realization and the
//! minimal market model as a closed-form oracle.

// NaN must fail the checks written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod affine;
pub mod curve_space;
pub mod deflator;
pub mod drift_engine;
pub mod error;
pub mod grid;
pub mod invariance;
pub mod mmm;
pub mod model_spec;
pub mod quadrature;
pub mod sampling;
pub mod spde_solver;

pub use curve_space::{Curve, CurveFamily, SpaceParams};
pub use error::{Error, Result};
pub use grid::Grid;
pub use model_spec::{Mode, ModelSpec};
