//! Parametric coefficient families.
//!
//! Time functions feed the spot coefficients, market prices of risk and the
//! short rate; mark functions of `(t, x)` feed the jump coefficients. Both
//! accept arbitrary callables through the in-process API.

use std::fmt;
use std::sync::Arc;

use crate::curve_space::Curve;
use crate::error::{Error, Result};
use crate::grid::Grid;

pub type Func1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Func2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum TimeFn {
    Constant(f64),
    /// `scale * e^{rate t}`
    Exponential { scale: f64, rate: f64 },
    /// `intercept + slope * t`
    Linear { intercept: f64, slope: f64 },
    /// `values[k]` on `[knots[k-1], knots[k])`, with `knots` ascending and one
    /// shorter than `values`.
    Piecewise { knots: Vec<f64>, values: Vec<f64> },
    Custom(Func1),
}

impl fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFn::Constant(v) => write!(f, "Constant({v})"),
            TimeFn::Exponential { scale, rate } => write!(f, "Exponential({scale}, {rate})"),
            TimeFn::Linear { intercept, slope } => write!(f, "Linear({intercept}, {slope})"),
            TimeFn::Piecewise { knots, values } => write!(f, "Piecewise({knots:?}, {values:?})"),
            TimeFn::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Default for TimeFn {
    fn default() -> Self {
        TimeFn::Constant(0.0)
    }
}

impl TimeFn {
    pub fn piecewise(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != knots.len() + 1 {
            return Err(Error::Specification(format!(
                "piecewise table needs one more value than knots ({} knots, {} values)",
                knots.len(),
                values.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Specification("piecewise knots must be strictly ascending".into()));
        }
        Ok(TimeFn::Piecewise { knots, values })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant(v) => *v,
            TimeFn::Exponential { scale, rate } => scale * (rate * t).exp(),
            TimeFn::Linear { intercept, slope } => intercept + slope * t,
            TimeFn::Piecewise { knots, values } => values[knots.partition_point(|k| *k <= t)],
            TimeFn::Custom(f) => f(t),
        }
    }

    /// Time derivative; piecewise tables count as flat between knots.
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant(_) | TimeFn::Piecewise { .. } => 0.0,
            TimeFn::Exponential { scale, rate } => scale * rate * (rate * t).exp(),
            TimeFn::Linear { slope, .. } => *slope,
            TimeFn::Custom(f) => {
                let h = 1e-5 * (1.0 + t.abs());
                (f(t + h) - f(t - h)) / (2.0 * h)
            }
        }
    }

    /// `∫_{t0}^{t1} f`.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        match self {
            TimeFn::Constant(v) => v * (t1 - t0),
            TimeFn::Exponential { scale, rate } => {
                if rate.abs() < 1e-14 {
                    scale * (t1 - t0)
                } else {
                    scale * ((rate * t1).exp() - (rate * t0).exp()) / rate
                }
            }
            TimeFn::Linear { intercept, slope } => {
                intercept * (t1 - t0) + 0.5 * slope * (t1 * t1 - t0 * t0)
            }
            TimeFn::Piecewise { knots, values } => {
                let (lo, hi, sign) = if t0 <= t1 { (t0, t1, 1.0) } else { (t1, t0, -1.0) };
                let mut s = 0.0;
                let mut a = lo;
                let mut k = knots.partition_point(|x| *x <= lo);
                while a < hi {
                    let b = if k < knots.len() { knots[k].min(hi) } else { hi };
                    s += values[k] * (b - a);
                    a = b;
                    k += 1;
                }
                sign * s
            }
            TimeFn::Custom(f) => {
                let rule = crate::quadrature::gauss_legendre(32, t0, t1);
                rule.iter().map(|(x, w)| w * f(*x)).sum()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TimeFn::Constant(v) => *v == 0.0,
            TimeFn::Exponential { scale, .. } => *scale == 0.0,
            TimeFn::Linear { intercept, slope } => *intercept == 0.0 && *slope == 0.0,
            TimeFn::Piecewise { values, .. } => values.iter().all(|v| *v == 0.0),
            TimeFn::Custom(_) => false,
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self, TimeFn::Custom(_))
    }
}

/// A jump coefficient as a function of time and mark.
#[derive(Clone)]
pub enum MarkFn {
    Constant(f64),
    /// `intercept + slope * x`
    Affine { intercept: f64, slope: f64 },
    /// `intercept + slope * |x|`
    AbsAffine { intercept: f64, slope: f64 },
    Custom(Func2),
}

impl fmt::Debug for MarkFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarkFn::Constant(v) => write!(f, "Constant({v})"),
            MarkFn::Affine { intercept, slope } => write!(f, "Affine({intercept}, {slope})"),
            MarkFn::AbsAffine { intercept, slope } => write!(f, "AbsAffine({intercept}, {slope})"),
            MarkFn::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Default for MarkFn {
    fn default() -> Self {
        MarkFn::Constant(0.0)
    }
}

impl MarkFn {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            MarkFn::Constant(v) => *v,
            MarkFn::Affine { intercept, slope } => intercept + slope * x,
            MarkFn::AbsAffine { intercept, slope } => intercept + slope * x.abs(),
            MarkFn::Custom(f) => f(t, x),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MarkFn::Constant(v) => *v == 0.0,
            MarkFn::Affine { intercept, slope } | MarkFn::AbsAffine { intercept, slope } => {
                *intercept == 0.0 && *slope == 0.0
            }
            MarkFn::Custom(_) => false,
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self, MarkFn::Custom(_))
    }
}

/// Parametric initial curves, materialized on a grid with exact derivative samples.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveShape {
    Flat(f64),
    /// `level + slope * ξ`
    Linear { level: f64, slope: f64 },
    /// `level + scale * e^{rate ξ}`
    Exponential { level: f64, scale: f64, rate: f64 },
    /// `b0 + b1 e^{-ξ/τ} + b2 (ξ/τ) e^{-ξ/τ}`
    NelsonSiegel { b0: f64, b1: f64, b2: f64, tau: f64 },
    /// Samples already on the target grid.
    Samples(Curve),
}

impl CurveShape {
    pub fn materialize(&self, grid: &Grid) -> Result<Curve> {
        match self {
            CurveShape::Flat(v) => Ok(Curve::constant(*v, grid)),
            CurveShape::Linear { level, slope } => {
                Curve::from_derivative(*level, |_| *slope, grid)
            }
            CurveShape::Exponential { level, scale, rate } => {
                let mut c = Curve::exponential(*scale, *rate, grid);
                c.add_constant(*level);
                Ok(c)
            }
            CurveShape::NelsonSiegel { b0, b1, b2, tau } => {
                if !(*tau > 0.0) {
                    return Err(Error::Specification(format!("Nelson-Siegel tau must be positive, got {tau}")));
                }
                let (b1, b2, tau) = (*b1, *b2, *tau);
                Curve::from_derivative(b0 + b1, |x| {
                    let e = (-x / tau).exp();
                    -b1 / tau * e + b2 / tau * e * (1.0 - x / tau)
                }, grid)
            }
            CurveShape::Samples(c) => {
                if c.grid_step() != grid.step() || c.len() != grid.n_xi() {
                    return Err(Error::Grid("sampled initial curve is not on the simulation grid".into()));
                }
                Ok(c.clone())
            }
        }
    }

    /// Closed-form value, used by oracles.
    pub fn value(&self, xi: f64) -> Option<f64> {
        match self {
            CurveShape::Flat(v) => Some(*v),
            CurveShape::Linear { level, slope } => Some(level + slope * xi),
            CurveShape::Exponential { level, scale, rate } => Some(level + scale * (rate * xi).exp()),
            CurveShape::NelsonSiegel { b0, b1, b2, tau } => {
                let e = (-xi / tau).exp();
                Some(b0 + b1 * e + b2 * xi / tau * e)
            }
            CurveShape::Samples(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piecewise_eval_and_integral() {
        let f = TimeFn::piecewise(vec![1.0, 2.0], vec![1.0, 3.0, -1.0]).unwrap();
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(1.0), 3.0);
        assert_eq!(f.eval(5.0), -1.0);
        assert!((f.integral(0.5, 2.5) - (0.5 + 3.0 - 0.5)).abs() < 1e-15);
        assert!((f.integral(2.5, 0.5) + 3.0).abs() < 1e-15);
        assert!(TimeFn::piecewise(vec![2.0, 1.0], vec![0.0; 3]).is_err());
    }

    #[test]
    fn closed_form_integrals() {
        let e = TimeFn::Exponential { scale: 2.0, rate: 0.5 };
        assert!((e.integral(0.0, 2.0) - 4.0 * (1f64.exp() - 1.0)).abs() < 1e-14);
        let c = TimeFn::Custom(Arc::new(|t| t * t));
        assert!((c.integral(0.0, 3.0) - 9.0).abs() < 1e-12);
        assert!((c.derivative(2.0) - 4.0).abs() < 1e-8);
    }

    #[test]
    fn nelson_siegel_materializes() {
        let g = Grid::from_counts(1e-3, 0, 5000).unwrap();
        let s = CurveShape::NelsonSiegel { b0: 0.04, b1: -0.02, b2: 0.01, tau: 1.5 };
        let c = s.materialize(&g).unwrap();
        for xi in [0.0, 0.7, 3.3] {
            assert!((c.eval(xi).unwrap() - s.value(xi).unwrap()).abs() < 1e-8);
        }
    }
}
