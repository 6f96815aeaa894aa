//! Weighted Filipović spaces of forward curves.
//!
//! A [`Curve`] stores its value at maturity zero together with samples of its
//! derivative on a uniform maturity grid. Between nodes the derivative is the
//! linear interpolant of the samples; at the horizon node and beyond it is
//! zero. Node values are therefore the cumulative trapezoid of the samples,
//! and every operation below is exact with respect to this model.
//!
//! The norm is
//! `‖h‖_ρ² = h(0)² + ∫ h'(s)² e^{ρ s} ds`, computed with the trapezoid rule on
//! the same grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    h0: f64,
    deriv: Vec<f64>,
    step: f64,
}

fn check_finite(h0: f64, deriv: &[f64]) -> Result<()> {
    if !h0.is_finite() {
        return Err(Error::InvalidCurve(format!("non-finite value at 0: {h0}")));
    }
    if let Some((k, v)) = deriv.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidCurve(format!(
            "non-finite derivative sample {v} at node {k}"
        )));
    }
    Ok(())
}

impl Curve {
    /// Builds a curve from its value at 0 and derivative samples at `k * step`.
    pub fn new(h0: f64, deriv: Vec<f64>, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidCurve(format!("grid step must be positive, got {step}")));
        }
        if deriv.is_empty() {
            return Err(Error::InvalidCurve("at least one derivative sample required".into()));
        }
        check_finite(h0, &deriv)?;
        Ok(Curve { h0, deriv, step })
    }

    pub(crate) fn raw(h0: f64, deriv: Vec<f64>, step: f64) -> Self {
        Curve { h0, deriv, step }
    }

    pub fn constant(value: f64, grid: &Grid) -> Self {
        Curve::raw(value, vec![0.0; grid.n_xi()], grid.step())
    }

    pub fn zero(grid: &Grid) -> Self {
        Curve::constant(0.0, grid)
    }

    /// Curve with value `h0` and derivative sampled from `deriv`.
    pub fn from_derivative(h0: f64, deriv: impl Fn(f64) -> f64, grid: &Grid) -> Result<Self> {
        let d = (0..grid.n_xi()).map(|k| deriv(grid.time(k))).collect();
        Curve::new(h0, d, grid.step())
    }

    /// `scale * e^{rate ξ}` with node values exactly geometric.
    ///
    /// The derivative samples carry the factor `tanh(x)/x`, `x = rate Δ / 2`,
    /// so that the trapezoid of consecutive samples reproduces
    /// `scale e^{rate kΔ}` at every node below the horizon.
    pub fn exponential(scale: f64, rate: f64, grid: &Grid) -> Self {
        let dx = grid.step();
        let x = 0.5 * rate * dx;
        let s = if x.abs() < 1e-8 { 1.0 - x * x / 3.0 } else { x.tanh() / x };
        let rho = (rate * dx).exp();
        let mut d = Vec::with_capacity(grid.n_xi());
        let mut g = scale * rate * s;
        for _ in 0..grid.n_xi() {
            d.push(g);
            g *= rho;
        }
        Curve::raw(scale, d, dx)
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn deriv(&self) -> &[f64] {
        &self.deriv
    }

    pub fn grid_step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.deriv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deriv.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.deriv.len() as f64
    }

    fn d(&self, k: usize) -> f64 {
        self.deriv.get(k).copied().unwrap_or(0.0)
    }

    pub fn same_grid(&self, other: &Curve) -> bool {
        self.deriv.len() == other.deriv.len() && self.step == other.step
    }

    fn require_same_grid(&self, other: &Curve) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::Grid(format!(
                "curves on different grids: ({}, {}) vs ({}, {})",
                self.step,
                self.len(),
                other.step,
                other.len()
            )))
        }
    }

    /// Values at the nodes `0, Δ, …, NΔ` (N + 1 entries).
    pub fn node_values(&self) -> Vec<f64> {
        let n = self.deriv.len();
        let mut v = Vec::with_capacity(n + 1);
        let mut acc = self.h0;
        v.push(acc);
        let half = 0.5 * self.step;
        for k in 0..n {
            acc += half * (self.deriv[k] + self.d(k + 1));
            v.push(acc);
        }
        v
    }

    /// Value at node `k` without allocating.
    pub fn node_value(&self, k: usize) -> f64 {
        let k = k.min(self.deriv.len());
        let half = 0.5 * self.step;
        let mut acc = self.h0;
        for j in 0..k {
            acc += half * (self.deriv[j] + self.d(j + 1));
        }
        acc
    }

    pub fn eval(&self, xi: f64) -> Result<f64> {
        if !(xi >= 0.0) {
            return Err(Error::Domain(format!("maturity must be nonnegative, got {xi}")));
        }
        let n = self.deriv.len();
        let q = xi / self.step;
        if q >= n as f64 {
            return Ok(self.node_value(n));
        }
        let k = (q.floor() as usize).min(n - 1);
        let x = (xi - k as f64 * self.step).clamp(0.0, self.step);
        let (dk, dk1) = (self.deriv[k], self.d(k + 1));
        Ok(self.node_value(k) + x * dk + x * x / (2.0 * self.step) * (dk1 - dk))
    }

    /// `h'(ξ)` under the piecewise-linear model.
    pub fn eval_deriv(&self, xi: f64) -> f64 {
        let n = self.deriv.len();
        let q = xi / self.step;
        if !(q >= 0.0) || q >= n as f64 {
            return 0.0;
        }
        let k = (q.floor() as usize).min(n - 1);
        let w = (q - k as f64).clamp(0.0, 1.0);
        (1.0 - w) * self.deriv[k] + w * self.d(k + 1)
    }

    /// Largest absolute value over the nodes and cell midpoints.
    pub fn sup_abs(&self) -> f64 {
        let v = self.node_values();
        let mut m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for k in 0..self.deriv.len() {
            let x = 0.5 * self.step;
            let mid = v[k] + x * self.deriv[k] + x * x / (2.0 * self.step) * (self.d(k + 1) - self.deriv[k]);
            m = m.max(mid.abs());
        }
        m
    }

    pub fn norm(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::Parameter(format!("rho must be positive, got {rho}")));
        }
        check_finite(self.h0, &self.deriv)?;
        let q = (rho * self.step).exp();
        let mut w = 1.0;
        let mut s = 0.0;
        for (k, d) in self.deriv.iter().enumerate() {
            let c = if k == 0 { 0.5 } else { 1.0 };
            s += c * d * d * w;
            w *= q;
        }
        let r = (self.h0 * self.h0 + self.step * s).sqrt();
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::InvalidCurve(format!("norm overflow at rho={rho}")))
        }
    }

    /// The integral operator `(Ih)(ξ) = ∫₀^ξ h`.
    pub fn integral_op(&self) -> Curve {
        let mut v = self.node_values();
        v.pop();
        Curve::raw(0.0, v, self.step)
    }

    /// `∫₀^τ h`, consistent with [`Curve::integral_op`].
    pub fn integral(&self, tau: f64) -> Result<f64> {
        if let Some(k) = on_node(tau, self.step) {
            return Ok(self.integral_nodes_upto(k));
        }
        self.integral_op().eval(tau)
    }

    /// `∫₀^{kΔ} h` for a node index.
    pub fn integral_nodes_upto(&self, k: usize) -> f64 {
        let n = self.deriv.len();
        let k = k.min(n);
        let half = 0.5 * self.step;
        let mut v = self.h0;
        let mut acc = 0.0;
        for j in 0..k {
            let next = if j + 1 < n { v + half * (self.deriv[j] + self.d(j + 1)) } else { 0.0 };
            acc += half * (v + next);
            v = next;
        }
        acc
    }

    /// Cumulative integrals `∫₀^{kΔ} h` at all nodes.
    pub fn integral_nodes(&self) -> Vec<f64> {
        self.integral_op().node_values()
    }

    pub fn product(&self, other: &Curve) -> Result<Curve> {
        self.require_same_grid(other)?;
        let va = self.node_values();
        let vb = other.node_values();
        let d = (0..self.len())
            .map(|k| self.deriv[k] * vb[k] + va[k] * other.deriv[k])
            .collect();
        Ok(Curve::raw(self.h0 * other.h0, d, self.step))
    }

    /// `f ∘ h`, with derivative `f'(h) h'` on the nodes.
    pub fn compose(&self, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Curve {
        let v = self.node_values();
        let d = (0..self.len()).map(|k| df(v[k]) * self.deriv[k]).collect();
        Curve::raw(f(self.h0), d, self.step)
    }

    /// Shift semigroup `(S_t h)(ξ) = h(t + ξ)`.
    pub fn shift(&self, t: f64) -> Result<Curve> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("shift must be nonnegative, got {t}")));
        }
        if let Some(j) = on_node(t, self.step) {
            return Ok(self.shift_steps(j));
        }
        let h0 = self.eval(t)?;
        let d = (0..self.len())
            .map(|k| self.eval_deriv(t + k as f64 * self.step))
            .collect();
        Ok(Curve::raw(h0, d, self.step))
    }

    /// Exact shift by `j` grid steps.
    pub fn shift_steps(&self, j: usize) -> Curve {
        let mut c = self.clone();
        c.shift_steps_in_place(j);
        c
    }

    pub fn shift_steps_in_place(&mut self, j: usize) {
        if j == 0 {
            return;
        }
        let n = self.deriv.len();
        let j = j.min(n);
        self.h0 = self.node_value(j);
        self.deriv.copy_within(j.., 0);
        for d in &mut self.deriv[n - j..] {
            *d = 0.0;
        }
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, other: &Curve, k: f64) -> Result<()> {
        self.require_same_grid(other)?;
        self.axpy(other, k);
        Ok(())
    }

    pub(crate) fn axpy(&mut self, other: &Curve, k: f64) {
        if k == 0.0 {
            return;
        }
        self.h0 += k * other.h0;
        for (a, b) in self.deriv.iter_mut().zip(&other.deriv) {
            *a += k * b;
        }
    }

    pub fn scaled(&self, k: f64) -> Curve {
        Curve::raw(k * self.h0, self.deriv.iter().map(|d| k * d).collect(), self.step)
    }

    pub fn add_constant(&mut self, c: f64) {
        self.h0 += c;
    }

    pub fn is_finite(&self) -> bool {
        check_finite(self.h0, &self.deriv).is_ok()
    }
}

fn on_node(x: f64, step: f64) -> Option<usize> {
    let q = x / step;
    let n = q.round();
    if n >= 0.0 && (q - n).abs() <= 1e-9 * n.max(1.0) {
        Some(n as usize)
    } else {
        None
    }
}

/// The state `η = (η⁰, η¹, …, η^m)`; index 0 is the riskless curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFamily {
    curves: Vec<Curve>,
}

impl CurveFamily {
    pub fn new(curves: Vec<Curve>) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| Error::InvalidCurve("a family needs the riskless curve".into()))?;
        if let Some(c) = curves.iter().find(|c| !c.same_grid(first)) {
            return Err(Error::Grid(format!(
                "family members on different grids: ({}, {}) vs ({}, {})",
                first.step,
                first.len(),
                c.step,
                c.len()
            )));
        }
        Ok(CurveFamily { curves })
    }

    /// Number of risky indices.
    pub fn m(&self) -> usize {
        self.curves.len() - 1
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn curves_mut(&mut self) -> &mut [Curve] {
        &mut self.curves
    }

    pub fn into_curves(self) -> Vec<Curve> {
        self.curves
    }

    pub fn get(&self, i: usize) -> &Curve {
        &self.curves[i]
    }

    pub fn grid_step(&self) -> f64 {
        self.curves[0].step
    }

    pub fn samples(&self) -> usize {
        self.curves[0].len()
    }

    /// Product-space norm `(Σ_i ‖η^i‖²)^{1/2}`.
    pub fn norm(&self, rho: f64) -> Result<f64> {
        let mut s = 0.0;
        for c in &self.curves {
            let n = c.norm(rho)?;
            s += n * n;
        }
        Ok(s.sqrt())
    }

    pub fn shift_steps(&self, j: usize) -> CurveFamily {
        CurveFamily { curves: self.curves.iter().map(|c| c.shift_steps(j)).collect() }
    }

    pub fn shift(&self, t: f64) -> Result<CurveFamily> {
        Ok(CurveFamily { curves: self.curves.iter().map(|c| c.shift(t)).collect::<Result<_>>()? })
    }
}

/// The weights `0 < ρ < ρ'` of the two Filipović spaces in play.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub rho: f64,
    pub rho_prime: f64,
}

impl SpaceParams {
    pub fn new(rho: f64, rho_prime: f64) -> Result<Self> {
        let p = SpaceParams { rho, rho_prime };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if self.rho > 0.0 && self.rho_prime > self.rho && self.rho_prime.is_finite() {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "need 0 < rho < rho', got rho={} rho'={}",
                self.rho, self.rho_prime
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceConstants {
    pub c_rho: f64,
    pub c_rho_rhop: f64,
    pub k_rho_rhop: f64,
}

/// `C_ρ = 1 + 1/√ρ`, the sup-norm embedding constant.
pub fn c_rho(rho: f64) -> f64 {
    1.0 + 1.0 / rho.sqrt()
}

pub fn constants(p: SpaceParams) -> Result<SpaceConstants> {
    p.check()?;
    let c = c_rho(p.rho);
    let cc = (1.0 / (p.rho_prime * (p.rho_prime - p.rho))).sqrt();
    Ok(SpaceConstants { c_rho: c, c_rho_rhop: cc, k_rho_rhop: c * cc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VwValues {
    pub v: f64,
    pub w_inv: f64,
    pub w_small: f64,
}

/// `V_K(r) = r (1 + r) e^{K r}`.
pub fn v_k(k: f64, r: f64) -> f64 {
    r * (1.0 + r) * (k * r).exp()
}

/// Inverse of `V_K` by bisection.
///
/// Bisection runs until the bracket collapses to adjacent floats, which is
/// tighter than 1e-12 everywhere on the range of interest.
pub fn w_k(k: f64, r: f64) -> Result<f64> {
    if !(k > 0.0) || !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Parameter(format!("need K > 0 and finite r >= 0, got K={k} r={r}")));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, r.max(1.0));
    while v_k(k, hi) < r {
        hi *= 2.0;
        assert!(hi.is_finite(), "bisection bracket failure");
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if v_k(k, mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let e_lo = (v_k(k, lo) - r).abs();
    let e_hi = (v_k(k, hi) - r).abs();
    Ok(if e_lo <= e_hi { lo } else { hi })
}

pub fn v_w_functions(k: f64, r: f64) -> Result<VwValues> {
    let w = w_k(k, r)?;
    Ok(VwValues { v: v_k(k, r), w_inv: w, w_small: w.min(r) })
}
