//! Minimal market model.
//!
//! The discounted growth-optimal portfolio follows a time-changed squared
//! Bessel process of dimension four,
//! `dX = α*(t) dt + sqrt(X α*(t)) dW` with `α*(t) = α0 e^{ηt}`.
//! Bond prices carry the factor `M(t,T) = 1 − exp(−X_t / (2(φ(T) − φ(t))))`,
//! so the benchmark-deflated riskless bond is a strict local martingale under
//! any candidate risk-neutral measure.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::curve_space::{Curve, CurveFamily};
use crate::deflator::Moments;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model_spec::TimeFn;
use crate::spde_solver::{path_rng, record_steps, PathEnsemble, PathRecord, SimConfig, Snapshot};

/// Above this the contribution `M` is one to double precision.
const U_CUTOFF: f64 = 700.0;

#[derive(Debug, Clone)]
pub struct MmmParams {
    pub alpha0: f64,
    pub eta: f64,
    pub r: TimeFn,
    /// Spot drifts `a^i`, index 0 zero.
    pub a: Vec<TimeFn>,
    pub x0: f64,
}

impl MmmParams {
    pub fn new(alpha0: f64, eta: f64, m: usize) -> Result<Self> {
        let p = MmmParams { alpha0, eta, r: TimeFn::Constant(0.0), a: vec![TimeFn::Constant(0.0); m + 1], x0: 1.0 };
        p.check()?;
        Ok(p)
    }

    pub fn m(&self) -> usize {
        self.a.len().saturating_sub(1)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.alpha0 > 0.0) || !(self.eta > 0.0) || !(self.x0 > 0.0) {
            return Err(Error::Parameter("alpha0, eta and the initial value must be positive".into()));
        }
        if self.a.is_empty() || !self.a[0].is_zero() {
            return Err(Error::Specification("the riskless index must have zero spot drift".into()));
        }
        Ok(())
    }

    pub fn alpha_star(&self, t: f64) -> f64 {
        self.alpha0 * (self.eta * t).exp()
    }
}

/// `φ(t) = α0/(4η)(e^{ηt} − 1)`.
pub fn phi_time(p: &MmmParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    Ok(p.alpha0 / (4.0 * p.eta) * (p.eta * t).exp_m1())
}

fn exponent(p: &MmmParams, t: f64, big_t: f64, xbar: f64) -> Result<(f64, f64)> {
    if !(big_t > t) {
        return Err(Error::Domain(format!("maturity {big_t} must exceed time {t}")));
    }
    if !(xbar > 0.0) {
        return Err(Error::Domain(format!("the growth-optimal value must be positive, got {xbar}")));
    }
    let d = phi_time(p, big_t)? - phi_time(p, t)?;
    Ok((xbar / (2.0 * d), d))
}

/// `M(t,T)`.
pub fn mprc(p: &MmmParams, t: f64, big_t: f64, xbar: f64) -> Result<f64> {
    let (u, _) = exponent(p, t, big_t, xbar)?;
    Ok(-(-u).exp_m1())
}

/// `1 − M(t,T) = e^{−u}`, resolvable where `M` itself rounds to one.
pub fn mprc_gap(p: &MmmParams, t: f64, big_t: f64, xbar: f64) -> Result<f64> {
    let (u, _) = exponent(p, t, big_t, xbar)?;
    Ok((-u).exp())
}

/// `m(t,T) = −∂_T ln M(t,T)` and its `T`-derivative.
pub fn mprc_rate(p: &MmmParams, t: f64, big_t: f64, xbar: f64) -> Result<(f64, f64)> {
    let (u, d) = exponent(p, t, big_t, xbar)?;
    if u > U_CUTOFF {
        return Ok((0.0, 0.0));
    }
    let dphi = 0.25 * p.alpha_star(big_t);
    let om = -(-u).exp_m1();
    let m = u * dphi / d * (-u).exp() / om;
    let dm = m * (p.eta - 2.0 * dphi / d + u * dphi / (d * om));
    Ok((m, dm))
}

/// Full-truncation Euler step of the discounted growth-optimal portfolio.
pub fn gop_step(xbar: f64, p: &MmmParams, t: f64, dt: f64, dw: f64) -> f64 {
    let a = p.alpha_star(t);
    xbar + a * dt + (xbar.max(0.0) * a).sqrt() * dw
}

/// `B^0(t,T) = exp(−∫_t^T r) M(t,T)`.
pub fn bond0_mmm(p: &MmmParams, t: f64, big_t: f64, xbar: f64) -> Result<f64> {
    if big_t == t {
        return Ok(1.0);
    }
    Ok((-p.r.integral(t, big_t)).exp() * mprc(p, t, big_t, xbar)?)
}

/// `B^i(t,T) = B^0(t,T) exp(∫_t^T a^i)`.
pub fn bond_mmm(p: &MmmParams, i: usize, t: f64, big_t: f64, xbar: f64) -> Result<f64> {
    Ok(bond0_mmm(p, t, big_t, xbar)? * p.a[i].integral(t, big_t).exp())
}

/// `ξ ↦ r(t+ξ) + m(t,t+ξ) − a^i(t+ξ)` on `grid`.
pub fn forward_curve_mmm(p: &MmmParams, i: usize, t: f64, xbar: f64, grid: &Grid) -> Result<Curve> {
    if i > p.m() {
        return Err(Error::Domain(format!("index {i} exceeds m = {}", p.m())));
    }
    let h0 = p.r.eval(t) - p.a[i].eval(t);
    let d = (0..grid.n_xi())
        .map(|k| {
            let s = t + grid.time(k);
            let dm = if k == 0 { 0.0 } else { mprc_rate(p, t, s, xbar)?.1 };
            Ok(p.r.derivative(s) + dm - p.a[i].derivative(s))
        })
        .collect::<Result<Vec<_>>>()?;
    Curve::new(h0, d, grid.step())
}

pub fn forward_family_mmm(p: &MmmParams, t: f64, xbar: f64, grid: &Grid) -> Result<CurveFamily> {
    CurveFamily::new((0..=p.m()).map(|i| forward_curve_mmm(p, i, t, xbar, grid)).collect::<Result<Vec<_>>>()?)
}

/// One path of the discounted growth-optimal portfolio at the grid times.
pub fn gop_path(p: &MmmParams, seed: u64, path: usize, n: usize, dt: f64) -> (Vec<f64>, usize) {
    let mut rng = path_rng(seed, path);
    let sq = dt.sqrt();
    let mut x = Vec::with_capacity(n + 1);
    x.push(p.x0);
    let mut truncated = 0;
    for k in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let prev = x[k];
        if prev <= 0.0 {
            truncated += 1;
        }
        x.push(gop_step(prev, p, k as f64 * dt, dt, z * sq));
    }
    (x, truncated)
}

#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    /// Fraction of steps that started at a nonpositive value.
    pub truncated_fraction: f64,
}

/// Monte Carlo estimate of `E[X_t / X_T]` started from `x0`.
pub fn mprc_mc(p: &MmmParams, t: f64, big_t: f64, dt: f64, n_paths: usize, seed: u64) -> Result<McEstimate> {
    p.check()?;
    if !(big_t > t) || !(t >= 0.0) {
        return Err(Error::Domain(format!("need 0 ≤ t < T, got t = {t}, T = {big_t}")));
    }
    let nt = (t / dt).round() as usize;
    let n = (big_t / dt).round() as usize;
    if ((nt as f64) * dt - t).abs() > 1e-9 || ((n as f64) * dt - big_t).abs() > 1e-9 {
        return Err(Error::Grid(format!("times {t}, {big_t} are not multiples of {dt}")));
    }
    let parts: Vec<(f64, usize)> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let (x, tr) = gop_path(p, seed, k, n, dt);
            (x[nt] / x[n], tr)
        })
        .collect();
    let mut mo = Moments::default();
    let mut tr = 0;
    for (v, c) in parts {
        mo.push(v);
        tr += c;
    }
    Ok(McEstimate { mean: mo.mean, se: mo.se(), n: n_paths, truncated_fraction: tr as f64 / (n_paths * n) as f64 })
}

/// Paths of the model recorded like a simulated ensemble, with deflator
/// `X_0 / X_t`, deterministic spots `S^i_0 e^{∫ a^i}` and closed-form bonds.
pub fn mmm_ensemble(p: &MmmParams, spots0: &[f64], cfg: &SimConfig) -> Result<PathEnsemble> {
    p.check()?;
    let m = p.m();
    if spots0.len() != m + 1 {
        return Err(Error::Specification(format!("{} initial spots for {} indices", spots0.len(), m + 1)));
    }
    let grid = cfg.grid;
    for &mat in &cfg.maturities {
        if grid.index_of(mat).is_none() || mat > grid.horizon_xi() {
            return Err(Error::Domain(format!("maturity {mat} is off the grid")));
        }
    }
    let steps = record_steps(grid.n_t(), cfg.record_every);
    let dt = grid.step();
    let paths = (0..cfg.n_paths)
        .into_par_iter()
        .map(|k| {
            let (x, _) = gop_path(p, cfg.seed, k, grid.n_t(), dt);
            let snapshots = steps
                .iter()
                .map(|&s| {
                    let t = grid.time(s);
                    let xb = x[s];
                    let spots: Vec<f64> = (0..=m).map(|i| spots0[i] * p.a[i].integral(0.0, t).exp()).collect();
                    let bonds = (0..=m)
                        .map(|i| {
                            cfg.maturities
                                .iter()
                                .map(|&mat| {
                                    if mat + 1e-12 < t {
                                        Ok(f64::NAN)
                                    } else if xb <= 0.0 {
                                        Ok(p.a[i].integral(t, mat).exp() * (-p.r.integral(t, mat)).exp())
                                    } else {
                                        bond_mmm(p, i, t, mat.max(t), xb)
                                    }
                                })
                                .collect::<Result<Vec<_>>>()
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let family = if cfg.keep_curves && xb > 0.0 {
                        Some(forward_family_mmm(p, t, xb, &grid)?)
                    } else {
                        None
                    };
                    Ok(Snapshot {
                        step: s,
                        t,
                        short_ends: (0..=m).map(|i| p.r.eval(t) - p.a[i].eval(t)).collect(),
                        spots,
                        numeraire: p.r.integral(0.0, t).exp(),
                        deflator: p.x0 / xb,
                        bonds,
                        family,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PathRecord { snapshots })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble { grid, m, maturities: cfg.maturities.clone(), record_steps: steps, paths })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MmmParams {
        MmmParams::new(0.04, 0.1, 2).unwrap()
    }

    #[test]
    fn phi_examples() {
        let p = params();
        assert_eq!(phi_time(&p, 0.0).unwrap(), 0.0);
        assert!((phi_time(&p, 1.0).unwrap() - 0.1 * (0.1f64.exp() - 1.0)).abs() < 1e-15);
        assert!(phi_time(&p, 2.0).unwrap() > phi_time(&p, 1.0).unwrap());
        assert!(phi_time(&p, -1.0).is_err());
    }

    #[test]
    fn mprc_examples() {
        let p = params();
        // pick T so that φ(T) − φ(0) = 0.5
        let big_t = (0.5 * 4.0 * p.eta / p.alpha0 + 1.0).ln() / p.eta;
        assert!((mprc(&p, 0.0, big_t, 1.0).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!((bond0_mmm(&p, 0.0, big_t, 1.0).unwrap() - 0.632121).abs() < 1e-6);
        assert!(mprc(&p, 0.0, 1e-9, 1.0).unwrap() == 1.0);
        assert!(mprc(&p, 0.0, 200.0, 1.0).unwrap() < 1e-6);
        assert!(mprc(&p, 1.0, 1.0, 1.0).is_err());
        assert!(mprc_gap(&p, 0.0, 1.0, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn gop_step_examples() {
        let p = params();
        assert!((gop_step(1.0, &p, 0.5, 0.01, 0.0) - (1.0 + 0.04 * 0.05f64.exp() * 0.01)).abs() < 1e-16);
        assert_eq!(gop_step(0.0, &p, 0.5, 0.01, 3.0), 0.04 * 0.05f64.exp() * 0.01);
        assert!(gop_step(-0.1, &p, 0.0, 0.01, 5.0).is_finite());
    }

    #[test]
    fn rate_matches_finite_differences() {
        let p = params();
        for (t, big_t, x) in [(0.0, 1.0, 1.0), (0.5, 3.0, 0.8), (0.0, 20.0, 1.0), (1.0, 1.2, 0.05)] {
            let h = 1e-5;
            let lm = |s: f64| mprc(&p, t, s, x).unwrap().ln();
            let fd = -(lm(big_t + h) - lm(big_t - h)) / (2.0 * h);
            let (m, dm) = mprc_rate(&p, t, big_t, x).unwrap();
            assert!((m - fd).abs() < 1e-6 * (1.0 + m.abs()), "{m} {fd}");
            let fd2 = (mprc_rate(&p, t, big_t + h, x).unwrap().0 - mprc_rate(&p, t, big_t - h, x).unwrap().0) / (2.0 * h);
            assert!((dm - fd2).abs() < 1e-6 * (1.0 + dm.abs()), "{dm} {fd2}");
        }
    }

    #[test]
    fn forward_curve_examples() {
        let mut p = params();
        p.r = TimeFn::Constant(0.02);
        p.a = vec![TimeFn::Constant(0.0), TimeFn::Constant(0.01), TimeFn::Constant(0.03)];
        let g = Grid::new(1e-3, 0.0, 30.0).unwrap();
        let f = forward_family_mmm(&p, 0.0, 1.0, &g).unwrap();
        let v: Vec<Vec<f64>> = f.curves().iter().map(|c| c.node_values()).collect();
        assert!(v[1].iter().zip(&v[2]).all(|(a, b)| a >= b));
        for big_t in [1.0, 5.0, 25.0] {
            let k = g.index_of(big_t).unwrap();
            let lhs = (-f.get(0).integral_nodes_upto(k)).exp();
            let rhs = bond0_mmm(&p, 0.0, big_t, 1.0).unwrap();
            assert!((lhs - rhs).abs() < 1e-6, "{big_t}: {lhs} {rhs}");
        }
        let mut q = params();
        q.a = vec![TimeFn::Constant(0.0); 3];
        let f = forward_family_mmm(&q, 0.3, 1.1, &g).unwrap();
        assert_eq!(f.get(1), f.get(0));
    }
}
