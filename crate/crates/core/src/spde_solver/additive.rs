//! Additive form of the Euler scheme for exponential volatilities.
//!
//! When `β^i = c_i e^{δ_i ξ}` and `γ^i(x) = x g_i e^{ε_i ξ}` the drift does not
//! depend on the state, and the scheme splits into a deterministic curve
//! `D_n` plus two scalars per index:
//!
//! ```text
//! η_n = D_n + U_n β + V_n G,   U_{n+1} = e^{δΔ}(U_n + ΔW_n),   V_{n+1} = e^{εΔ}(V_n + Σx)
//! ```
//!
//! This holds exactly on `ξ ≤ ξ_max − t` because the exponential curves have
//! geometric node values, so shifting them by one step multiplies them by the
//! decay factor. Short ends and bond prices follow from the scalars.

use super::ensemble::{PathRecord, Snapshot};
use super::noise::{Noise, StepInputs, StreamNoise};
use super::SimConfig;
use crate::curve_space::Curve;
use crate::deflator::lmd_step;
use crate::drift_engine::{drift_terms, DriftInputs};
use crate::error::{Error, Result};
use crate::model_spec::{JumpVolSpec, Mode, ModelSpec, ShortRateSpec, SpotDrift, VolSpec};

pub(super) fn eligible(spec: &ModelSpec) -> bool {
    matches!(spec.vol, VolSpec::Zero | VolSpec::VasicekExp { .. })
        && matches!(spec.jump_vol, JumpVolSpec::Zero | JumpVolSpec::ExpMark { .. })
}

/// `∫₀^τ D` and the node of `τ`, or `None` once expired.
type Expiring = Option<(f64, usize)>;

pub(super) struct Plan {
    n: usize,
    /// `(c_i, e^{δ_i Δ})` per index; `None` without diffusion.
    beta: Option<Vec<(f64, f64)>>,
    /// `(g_i, e^{ε_i Δ})` per index; `None` without jump volatility.
    gamma: Option<Vec<(f64, f64)>>,
    /// Cumulative integrals of the unit exponentials, per index.
    int_beta: Vec<Vec<f64>>,
    int_gamma: Vec<Vec<f64>>,
    /// `D_n(0)` per step and index.
    d0: Vec<Vec<f64>>,
    /// Per record: per index and maturity, `∫₀^τ D` and the node of `τ` (None if expired).
    rec_int: Vec<Vec<Vec<Expiring>>>,
    record_steps: Vec<usize>,
    lam_b: Vec<Vec<f64>>,
    c_psi: Vec<Vec<f64>>,
    b: Vec<Vec<Vec<f64>>>,
    c_comp: Vec<Vec<f64>>,
    r_given: Option<Vec<f64>>,
    a_given: Option<Vec<Vec<f64>>>,
}

impl Plan {
    pub(super) fn new(cfg: &SimConfig, spec: &ModelSpec, steps: &[usize]) -> Result<Self> {
        let g = cfg.grid;
        let dx = g.step();
        let n = spec.m + 1;
        let beta = match &spec.vol {
            VolSpec::VasicekExp { c, delta } => Some((0..n).map(|i| (c[i], (delta[i] * dx).exp())).collect::<Vec<_>>()),
            _ => None,
        };
        let gamma = match &spec.jump_vol {
            JumpVolSpec::ExpMark { g: gs, eps } if !spec.jumps.is_none() => {
                Some((0..n).map(|i| (gs[i], (eps[i] * dx).exp())).collect::<Vec<_>>())
            }
            _ => None,
        };
        let int_beta = match &spec.vol {
            VolSpec::VasicekExp { c, delta } => {
                (0..n).map(|i| Curve::exponential(c[i], delta[i], &g).integral_nodes()).collect()
            }
            _ => vec![Vec::new(); n],
        };
        let int_gamma = match (&spec.jump_vol, &gamma) {
            (JumpVolSpec::ExpMark { g: gs, eps }, Some(_)) => {
                (0..n).map(|i| Curve::exponential(gs[i], eps[i], &g).integral_nodes()).collect()
            }
            _ => vec![Vec::new(); n],
        };

        let mut fam = spec.initial_family(&g)?;
        let mut d0 = Vec::with_capacity(g.n_t() + 1);
        let mut rec_int = Vec::with_capacity(steps.len());
        let mut next_rec = 0;
        let record = |fam: &crate::curve_space::CurveFamily, k: usize| -> Vec<Vec<Option<(f64, usize)>>> {
            let t = g.time(k);
            (0..n)
                .map(|i| {
                    cfg.maturities
                        .iter()
                        .map(|&m| {
                            if m + 1e-12 < t {
                                None
                            } else {
                                let node = g.index_of((m - t).max(0.0)).expect("maturity on grid");
                                Some((fam.get(i).integral_nodes_upto(node), node))
                            }
                        })
                        .collect()
                })
                .collect()
        };
        for k in 0..=g.n_t() {
            d0.push(fam.curves().iter().map(|c| c.h0()).collect::<Vec<_>>());
            if next_rec < steps.len() && steps[next_rec] == k {
                rec_int.push(record(&fam, k));
                next_rec += 1;
            }
            if k == g.n_t() {
                break;
            }
            let terms = drift_terms(&DriftInputs::new(&fam, g.time(k), spec))?;
            let mut curves = fam.into_curves();
            for (i, c) in curves.iter_mut().enumerate() {
                c.axpy(terms.alpha.get(i), dx);
                if let Some(comp) = &terms.compensator {
                    c.axpy(&comp[i], -dx);
                }
                c.shift_steps_in_place(1);
            }
            fam = crate::curve_space::CurveFamily::new(curves)?;
        }

        let mut lam_b = Vec::with_capacity(g.n_t());
        let mut c_psi = Vec::with_capacity(g.n_t());
        let mut b = Vec::with_capacity(g.n_t());
        let mut c_comp = Vec::with_capacity(g.n_t());
        for k in 0..g.n_t() {
            let t = g.time(k);
            let lam = spec.lambda(t, spec.mode);
            let bt: Vec<Vec<f64>> = (0..n).map(|i| spec.b(i, t)).collect();
            lam_b.push(bt.iter().map(|bi| bi.iter().zip(&lam).map(|(x, y)| x * y).sum()).collect());
            c_psi.push(
                (0..n)
                    .map(|i| {
                        if spec.mode == Mode::RiskNeutral || spec.jumps.is_none() {
                            0.0
                        } else {
                            spec.jumps.integrate(|x| spec.spot.c[i].eval(t, x) * spec.psi(t, x, spec.mode))
                        }
                    })
                    .collect(),
            );
            c_comp.push(
                (0..n)
                    .map(|i| {
                        if spec.jumps.is_none() || spec.spot.c[i].is_zero() {
                            0.0
                        } else {
                            spec.jumps.integrate(|x| spec.spot.c[i].eval(t, x))
                        }
                    })
                    .collect(),
            );
            b.push(bt);
        }
        let r_given = match &spec.short_rate {
            ShortRateSpec::FromCurve => None,
            ShortRateSpec::Given(r) => Some((0..g.n_t()).map(|k| r.eval(g.time(k))).collect()),
        };
        let a_given = match &spec.spot.drift {
            SpotDrift::Consistent => None,
            SpotDrift::Given(a) => Some((0..g.n_t()).map(|k| a.iter().map(|f| f.eval(g.time(k))).collect()).collect()),
        };
        Ok(Plan {
            n,
            beta,
            gamma,
            int_beta,
            int_gamma,
            d0,
            rec_int,
            record_steps: steps.to_vec(),
            lam_b,
            c_psi,
            b,
            c_comp,
            r_given,
            a_given,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn snapshot(&self, rec: usize, k: usize, dt: f64, u: &[f64], v: &[f64], spots: &[f64], x0: f64, z: f64) -> Snapshot {
        let short_ends: Vec<f64> = (0..self.n).map(|i| self.short_end(k, i, u, v)).collect();
        let bonds = (0..self.n)
            .map(|i| {
                self.rec_int[rec][i]
                    .iter()
                    .map(|e| match e {
                        None => f64::NAN,
                        Some((id, node)) => {
                            let mut s = *id;
                            if self.beta.is_some() {
                                s += u[i] * self.int_beta[i][*node];
                            }
                            if self.gamma.is_some() {
                                s += v[i] * self.int_gamma[i][*node];
                            }
                            (-s).exp()
                        }
                    })
                    .collect()
            })
            .collect();
        Snapshot {
            step: k,
            t: k as f64 * dt,
            spots: spots.to_vec(),
            short_ends,
            numeraire: x0,
            deflator: z,
            bonds,
            family: None,
        }
    }

    fn short_end(&self, k: usize, i: usize, u: &[f64], v: &[f64]) -> f64 {
        let mut e = self.d0[k][i];
        if let Some(b) = &self.beta {
            e += b[i].0 * u[i];
        }
        if let Some(g) = &self.gamma {
            e += g[i].0 * v[i];
        }
        e
    }

    pub(super) fn path(&self, cfg: &SimConfig, spec: &ModelSpec, path: usize) -> Result<PathRecord> {
        let dt = cfg.grid.step();
        let n = self.n;
        let mut noise = StreamNoise::new(cfg.seed, path, spec.factors, dt, &spec.jumps);
        let mut inp = StepInputs::quiet(spec.factors);
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut spots = spec.initial_spots.clone();
        let (mut x0, mut z) = (1.0, 1.0);
        let mut snaps = Vec::with_capacity(self.record_steps.len());
        snaps.push(self.snapshot(0, 0, dt, &u, &v, &spots, x0, z));
        let mut next_rec = 1;
        let mut a = vec![0.0; n];
        for k in 0..cfg.grid.n_t() {
            noise.draw(k, &mut inp);
            let t = k as f64 * dt;
            let r = match &self.r_given {
                Some(r) => r[k],
                None => self.short_end(k, 0, &u, &v),
            };
            match &self.a_given {
                Some(ag) => a.copy_from_slice(&ag[k]),
                None => {
                    for i in 1..n {
                        a[i] = r - self.short_end(k, i, &u, &v) - self.lam_b[k][i] - self.c_psi[k][i];
                    }
                }
            }
            for i in 1..n {
                if spots[i] == 0.0 {
                    continue;
                }
                let bw: f64 = self.b[k][i].iter().zip(&inp.dw).map(|(b, w)| b * w).sum();
                let cont = 1.0 + a[i] * dt + bw - dt * self.c_comp[k][i];
                if cont < 0.0 {
                    return Err(Error::SchemeViolation { t, index: i, factor: cont });
                }
                let mut f = cont;
                for &x in &inp.jumps {
                    f *= (1.0 + spec.spot.c[i].eval(t, x)).max(0.0);
                }
                spots[i] = if f > 0.0 { spots[i] * f } else { 0.0 };
            }
            x0 *= (r * dt).exp();
            z = lmd_step(z, dt, &inp, spec, t);
            if let Some(b) = &self.beta {
                for i in 0..n {
                    u[i] = b[i].1 * (u[i] + inp.dw[0]);
                }
            }
            if let Some(g) = &self.gamma {
                let s: f64 = inp.jumps.iter().sum();
                for i in 0..n {
                    v[i] = g[i].1 * (v[i] + s);
                }
            }
            if next_rec < self.record_steps.len() && self.record_steps[next_rec] == k + 1 {
                snaps.push(self.snapshot(next_rec, k + 1, dt, &u, &v, &spots, x0, z));
                next_rec += 1;
            }
        }
        Ok(PathRecord { snapshots: snaps })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{simulate, Method, SimConfig};
    use crate::grid::Grid;
    use crate::model_spec::*;

    fn rel(a: f64, b: f64) -> f64 {
        if a.is_nan() && b.is_nan() {
            0.0
        } else {
            (a - b).abs() / b.abs().max(1e-300)
        }
    }

    #[test]
    fn additive_matches_generic() {
        let g = Grid::new(0.01, 1.0, 4.0).unwrap();
        let mut spec = ModelSpec::new(2, 1);
        spec.initial_curves = vec![
            CurveShape::NelsonSiegel { b0: 0.03, b1: -0.01, b2: 0.02, tau: 1.0 },
            CurveShape::Flat(0.045),
            CurveShape::Exponential { level: 0.035, scale: 0.005, rate: -0.5 },
        ];
        spec.initial_spots = vec![1.0, 0.8, 0.9];
        spec.vol = VolSpec::VasicekExp { c: vec![0.01, 0.012, 0.012], delta: vec![-1.0, -0.8, -0.8] };
        spec.jump_vol = JumpVolSpec::ExpMark { g: vec![0.0, 0.004, 0.004], eps: vec![-2.0, -1.5, -1.5] };
        spec.jumps = JumpMeasure::atoms(vec![0.5, 1.5], vec![0.7, 0.3]).unwrap();
        spec.spot.b[1][0] = TimeFn::Constant(0.1);
        spec.spot.b[2][0] = TimeFn::Constant(0.1);
        spec.spot.c[1] = MarkFn::Affine { intercept: -0.02, slope: 0.01 };
        spec.spot.c[2] = MarkFn::Affine { intercept: -0.02, slope: 0.01 };
        spec.market_price.lambda = vec![TimeFn::Constant(0.15)];
        spec.market_price.psi = MarkFn::Constant(-0.1);
        let mut cfg = SimConfig::new(g, 6, 11);
        cfg.maturities = vec![0.5, 1.0, 2.0, 3.0];
        cfg.record_every = 25;
        cfg.method = Method::Generic;
        let a = simulate(&cfg, &spec).unwrap();
        cfg.method = Method::Additive;
        let b = simulate(&cfg, &spec).unwrap();
        let mut worst: f64 = 0.0;
        let mut jumps_seen = false;
        for (pa, pb) in a.paths.iter().zip(&b.paths) {
            for (sa, sb) in pa.snapshots.iter().zip(&pb.snapshots) {
                assert_eq!(sa.step, sb.step);
                for i in 0..3 {
                    worst = worst.max(rel(sa.spots[i], sb.spots[i]));
                    worst = worst.max((sa.short_ends[i] - sb.short_ends[i]).abs());
                    for k in 0..4 {
                        worst = worst.max(rel(sa.bonds[i][k], sb.bonds[i][k]));
                    }
                }
                worst = worst.max(rel(sa.numeraire, sb.numeraire)).max(rel(sa.deflator, sb.deflator));
                jumps_seen |= sa.deflator != 1.0;
            }
        }
        assert!(jumps_seen);
        assert!(worst < 1e-12, "worst discrepancy {worst:e}");
    }
}
