//! Finite-dimensional realization for exponential volatilities.
//!
//! With `β^i(ξ) = c_i e^{δ_i ξ}` and one Brownian driver the curve stays in
//! `φ(t) + span{e^{δ_i ·}}`, so the whole family is carried by the short
//! ends `z^i = η^i_t(0)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::curve_space::{Curve, CurveFamily};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model_spec::{grid_of, CurveShape, ModelSpec, TimeFn, VolSpec};
use crate::quadrature::gauss_legendre;
use crate::spde_solver::{brownian_increments, run_path, ReplayNoise};

#[derive(Debug, Clone)]
pub struct AffineSpec {
    pub c: Vec<f64>,
    pub delta: Vec<f64>,
    pub h0: CurveFamily,
    pub lambda: TimeFn,
    pub b: Vec<TimeFn>,
}

impl AffineSpec {
    /// Zero market price of risk and zero spot loadings.
    pub fn new(c: Vec<f64>, delta: Vec<f64>, h0: CurveFamily) -> Result<Self> {
        let n = h0.m() + 1;
        let a = AffineSpec { c, delta, h0, lambda: TimeFn::Constant(0.0), b: vec![TimeFn::Constant(0.0); n] };
        a.check()?;
        Ok(a)
    }

    pub fn from_shapes(c: Vec<f64>, delta: Vec<f64>, shapes: &[CurveShape], grid: &Grid) -> Result<Self> {
        let curves = shapes.iter().map(|s| s.materialize(grid)).collect::<Result<Vec<_>>>()?;
        AffineSpec::new(c, delta, CurveFamily::new(curves)?)
    }

    pub fn m(&self) -> usize {
        self.h0.m()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.h0.m() + 1;
        if self.c.len() != n || self.delta.len() != n || self.b.len() != n {
            return Err(Error::Specification(format!("affine coefficients need {n} entries per index")));
        }
        if self.delta.iter().any(|d| !(*d < 0.0)) || self.c.iter().any(|c| !c.is_finite()) {
            return Err(Error::Specification("decay rates must be negative and scales finite".into()));
        }
        if !self.b[0].is_zero() {
            return Err(Error::Specification("the riskless index has no spot loading".into()));
        }
        Ok(())
    }

    fn grid(&self) -> Grid {
        grid_of(&self.h0)
    }

    /// The equivalent full model: exponential volatility, one factor, no jumps.
    pub fn to_model_spec(&self) -> ModelSpec {
        let m = self.m();
        let mut spec = ModelSpec::new(m, 1);
        spec.initial_curves = self.h0.curves().iter().cloned().map(CurveShape::Samples).collect();
        spec.vol = VolSpec::VasicekExp { c: self.c.clone(), delta: self.delta.clone() };
        spec.market_price.lambda = vec![self.lambda.clone()];
        spec.spot.b = self.b.iter().map(|b| vec![b.clone()]).collect();
        spec
    }
}

fn vol_k(c: f64, delta: f64, t: f64) -> f64 {
    c * c / (2.0 * delta * delta) * (2.0 * delta * t).exp_m1()
}

fn check_index(a: &AffineSpec, i: usize, t: f64) -> Result<()> {
    if i > a.m() {
        return Err(Error::Domain(format!("index {i} exceeds m = {}", a.m())));
    }
    if !(t >= 0.0) || t >= a.h0.get(i).horizon() {
        return Err(Error::Domain(format!("time {t} outside the initial curve horizon {}", a.h0.get(i).horizon())));
    }
    Ok(())
}

/// `φ^i(t)(ξ) = h0(t+ξ) − h0(t)e^{δξ} + c²/(2δ²)(e^{2δt}−1)(e^{δξ}−1)e^{δξ}`.
pub fn phi_curve(a: &AffineSpec, i: usize, t: f64) -> Result<Curve> {
    check_index(a, i, t)?;
    let g = a.grid();
    let d = a.delta[i];
    phi_from(a.h0.get(i), t, vol_k(a.c[i], d, t), &Curve::exponential(1.0, d, &g), &Curve::exponential(1.0, 2.0 * d, &g))
}

fn phi_from(h0: &Curve, t: f64, k: f64, e1: &Curve, e2: &Curve) -> Result<Curve> {
    let mut phi = h0.shift(t)?;
    let v = phi.h0();
    phi.axpy(e1, -v);
    phi.axpy(e2, k);
    phi.axpy(e1, -k);
    Ok(phi)
}

/// `κ^i(t) = h0'(t) − δ h0(t) + c²/(2δ)(e^{2δt}−1)`.
///
/// `h0'` is read from the stored derivative samples.
pub fn kappa(a: &AffineSpec, i: usize, t: f64) -> Result<f64> {
    check_index(a, i, t)?;
    let (c, d, h) = (a.c[i], a.delta[i], a.h0.get(i));
    Ok(h.eval_deriv(t) - d * h.eval(t)? + c * c / (2.0 * d) * (2.0 * d * t).exp_m1())
}

/// Euler step of the short-end state.
pub fn realize_step(z: &[f64], a: &AffineSpec, t: f64, dt: f64, dw: f64, lambda_t: f64, b_t: &[f64]) -> Result<Vec<f64>> {
    (0..z.len())
        .map(|i| {
            let mu = -a.c[i] * (lambda_t + b_t[i]) + kappa(a, i, t)? + a.delta[i] * z[i];
            Ok(z[i] + mu * dt + a.c[i] * dw)
        })
        .collect()
}

/// `φ(t) + z^i e^{δ_i ·}`.
pub fn reconstruct(z: &[f64], a: &AffineSpec, t: f64) -> Result<CurveFamily> {
    let g = a.grid();
    let curves = (0..=a.m())
        .map(|i| {
            let mut phi = phi_curve(a, i, t)?;
            phi.axpy(&Curve::exponential(1.0, a.delta[i], &g), z[i]);
            Ok(phi)
        })
        .collect::<Result<Vec<_>>>()?;
    CurveFamily::new(curves)
}

/// Mean and variance of `η^i_t(0)` under the exact state dynamics.
pub fn short_end_moments(a: &AffineSpec, i: usize, t: f64) -> Result<(f64, f64)> {
    check_index(a, i, t)?;
    let (c, d) = (a.c[i], a.delta[i]);
    let e = (d * t).exp_m1();
    let drift: f64 = if t > 0.0 {
        gauss_legendre(32, 0.0, t)
            .iter()
            .map(|&(s, w)| w * (d * (t - s)).exp() * -c * (a.lambda.eval(s) + a.b[i].eval(s)))
            .sum()
    } else {
        0.0
    };
    let mean = a.h0.get(i).eval(t)? + c * c / (2.0 * d * d) * e * e + drift;
    let var = c * c * (2.0 * d * t).exp_m1() / (2.0 * d);
    Ok((mean, var))
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub max_gap: f64,
    pub worst_path: usize,
    pub worst_t: f64,
    pub paths: usize,
    /// Largest maturity compared; beyond it the shifted initial curves run
    /// off their horizon.
    pub xi_max: f64,
}

/// Gap along one path driven by `dw` (one entry per step, one factor).
pub fn path_gap(a: &AffineSpec, spec: &ModelSpec, grid: &Grid, dw: &[Vec<f64>]) -> Result<(f64, f64)> {
    if a.h0.samples() != grid.n_xi() || (a.h0.grid_step() - grid.step()).abs() > 1e-12 * grid.step() {
        return Err(Error::Grid("affine initial curves do not match the simulation grid".into()));
    }
    if dw.len() < grid.n_t() {
        return Err(Error::Parameter(format!("{} increments for {} steps", dw.len(), grid.n_t())));
    }
    let n = a.m() + 1;
    let kmax = grid.n_xi() - grid.n_t();
    let e1: Vec<Curve> = (0..n).map(|i| Curve::exponential(1.0, a.delta[i], grid)).collect();
    let e2: Vec<Curve> = (0..n).map(|i| Curve::exponential(1.0, 2.0 * a.delta[i], grid)).collect();
    let mut z: Vec<f64> = a.h0.curves().iter().map(|c| c.h0()).collect();
    let mut worst = (0.0f64, 0.0f64);
    let mut noise = ReplayNoise { dw: dw.to_vec() };
    run_path(spec, grid, &mut noise, |pre, info, post| {
        let b: Vec<f64> = (0..n).map(|i| a.b[i].eval(pre.t)).collect();
        z = realize_step(&z, a, pre.t, info.dt, info.inputs.dw[0], a.lambda.eval(pre.t), &b)?;
        for i in 0..n {
            let mut rec = phi_from(a.h0.get(i), post.t, vol_k(a.c[i], a.delta[i], post.t), &e1[i], &e2[i])?;
            rec.axpy(&e1[i], z[i]);
            let full = post.family.get(i).node_values();
            let rec = rec.node_values();
            for k in 0..=kmax {
                let g = (full[k] - rec[k]).abs();
                if g > worst.0 || g.is_nan() {
                    worst = (if g.is_nan() { f64::INFINITY } else { g }, post.t);
                }
            }
        }
        Ok(())
    })?;
    Ok(worst)
}

/// Full model against the realization with shared increments.
pub fn realization_gap(cfg: &crate::spde_solver::SimConfig, a: &AffineSpec) -> Result<GapReport> {
    a.check()?;
    let grid = cfg.grid;
    let dws: Vec<Vec<Vec<f64>>> =
        (0..cfg.n_paths).map(|p| brownian_increments(cfg.seed, p, grid.n_t(), grid.step(), 1)).collect();
    realization_gap_with(a, &grid, &dws)
}

/// As [`realization_gap`] with given increments per path.
pub fn realization_gap_with(a: &AffineSpec, grid: &Grid, dws: &[Vec<Vec<f64>>]) -> Result<GapReport> {
    a.check()?;
    let spec = a.to_model_spec();
    let gaps = dws.par_iter().map(|dw| path_gap(a, &spec, grid, dw)).collect::<Result<Vec<_>>>()?;
    let mut r = GapReport {
        max_gap: 0.0,
        worst_path: 0,
        worst_t: 0.0,
        paths: dws.len(),
        xi_max: grid.horizon_xi() - grid.horizon_t(),
    };
    for (p, &(g, t)) in gaps.iter().enumerate() {
        if g > r.max_gap {
            r = GapReport { max_gap: g, worst_path: p, worst_t: t, ..r };
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(k: f64, m: usize, g: &Grid) -> CurveFamily {
        CurveFamily::new(vec![Curve::constant(k, g); m + 1]).unwrap()
    }

    #[test]
    fn phi_examples() {
        let g = Grid::new(0.01, 0.0, 3.0).unwrap();
        let a = AffineSpec::new(vec![0.0, 0.0], vec![-0.5, -0.5], flat(0.03, 1, &g)).unwrap();
        let phi = phi_curve(&a, 1, 0.4).unwrap();
        for k in [0usize, 10, 150, 299] {
            let xi = k as f64 * 0.01;
            assert!((phi.node_value(k) - (0.03 - 0.03 * (-0.5 * xi).exp())).abs() < 1e-12);
        }
        let a = AffineSpec::from_shapes(
            vec![0.01, 0.02],
            vec![-0.5, -0.8],
            &[CurveShape::Flat(0.02), CurveShape::NelsonSiegel { b0: 0.04, b1: -0.01, b2: 0.01, tau: 1.5 }],
            &g,
        )
        .unwrap();
        for t in [0.0, 0.3, 1.7] {
            assert_eq!(phi_curve(&a, 1, t).unwrap().h0(), 0.0);
        }
        assert!(phi_curve(&a, 1, 3.0).is_err());
        let z: Vec<f64> = a.h0.curves().iter().map(|c| c.h0()).collect();
        let back = reconstruct(&z, &a, 0.0).unwrap();
        for (x, y) in back.curves().iter().zip(a.h0.curves()) {
            let (vx, vy) = (x.node_values(), y.node_values());
            assert!(vx.iter().zip(&vy).all(|(p, q)| (p - q).abs() < 1e-15));
        }
        let r = reconstruct(&[0.01, -0.02], &a, 1.0).unwrap();
        assert_eq!(r.get(1).h0(), -0.02);
    }

    #[test]
    fn kappa_examples() {
        let g = Grid::new(0.01, 0.0, 3.0).unwrap();
        let a = AffineSpec::new(vec![0.0, 0.0], vec![-0.5, -0.5], flat(0.03, 1, &g)).unwrap();
        assert!((kappa(&a, 1, 0.7).unwrap() - 0.015).abs() < 1e-15);
        let eig = CurveFamily::new(vec![Curve::exponential(0.02, -0.5, &g); 2]).unwrap();
        let a = AffineSpec::new(vec![0.0, 0.0], vec![-0.5, -0.5], eig).unwrap();
        // the stored slope of an exponential carries an O(Δ²) error
        for t in [0.0, 0.5, 1.23] {
            assert!(kappa(&a, 1, t).unwrap().abs() < 1e-7);
        }
    }

    #[test]
    fn realize_step_examples() {
        let g = Grid::new(0.01, 0.0, 3.0).unwrap();
        let a = AffineSpec::new(vec![0.0, 0.0], vec![-0.5, -0.5], flat(0.03, 1, &g)).unwrap();
        let z = realize_step(&[0.03, 0.03], &a, 0.2, 0.01, 0.3, 0.0, &[0.0, 0.0]).unwrap();
        assert!(z.iter().all(|v| (v - 0.03).abs() < 1e-15));
        let a = AffineSpec::new(vec![0.01, 0.02], vec![-0.5, -0.5], flat(0.03, 1, &g)).unwrap();
        let z0 = realize_step(&[0.03, 0.01], &a, 0.2, 0.0, 0.0, 0.0, &[0.0, 0.0]).unwrap();
        assert_eq!(z0, vec![0.03, 0.01]);
        let base = realize_step(&[0.03, 0.01], &a, 0.2, 0.01, 0.1, 0.0, &[0.0, 0.0]).unwrap();
        let shifted = realize_step(&[0.03, 0.01], &a, 0.2, 0.01, 0.1, 0.5, &[0.0, 0.0]).unwrap();
        for i in 0..2 {
            assert!((shifted[i] - base[i] + a.c[i] * 0.5 * 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_gap_vanishes() {
        let g = Grid::new(0.01, 1.0, 3.0).unwrap();
        let a = AffineSpec::new(vec![0.0, 0.0], vec![-0.5, -0.7], flat(0.03, 1, &g)).unwrap();
        let cfg = crate::spde_solver::SimConfig::new(g, 3, 1);
        let r = realization_gap(&cfg, &a).unwrap();
        assert!(r.max_gap < 1e-12, "{}", r.max_gap);
    }
}
