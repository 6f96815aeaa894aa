//! The minimal deflator `Ẑ = E(λ·W + ψ ∗ μ̃)` and martingale diagnostics for
//! deflated prices `Ẑ (X⁰)^{-1} S^i B^i(·, T)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model_spec::ModelSpec;
use crate::spde_solver::{
    bond_price, simulate_observed, stream_noise, Noise, PathEnsemble, PathObserver, PathState,
    SimConfig, StepInfo, StepInputs,
};

/// `z · exp(λ·ΔW − ½|λ|²Δt − Δt ∫ψ dF) · Π (1 + ψ(x_j))`.
pub fn lmd_step(z: f64, dt: f64, inp: &StepInputs, spec: &ModelSpec, t: f64) -> f64 {
    let lam = spec.lambda(t, spec.mode);
    let lw: f64 = lam.iter().zip(&inp.dw).map(|(l, w)| l * w).sum();
    let l2: f64 = lam.iter().map(|l| l * l).sum();
    let psi_zero = spec.market_price.psi.is_zero() || spec.mode == crate::model_spec::Mode::RiskNeutral;
    let psi_int = if psi_zero || spec.jumps.is_none() {
        0.0
    } else {
        spec.jumps.integrate(|x| spec.psi(t, x, spec.mode))
    };
    let mut f = (lw - 0.5 * l2 * dt - dt * psi_int).exp();
    if !psi_zero {
        for &x in &inp.jumps {
            f *= 1.0 + spec.psi(t, x, spec.mode);
        }
    }
    z * f
}

/// Deflated prices as `values[index][maturity][time][path]`.
#[derive(Debug, Clone, Serialize)]
pub struct DeflatedSeries {
    pub times: Vec<f64>,
    pub indices: Vec<usize>,
    pub maturities: Vec<f64>,
    pub values: Vec<Vec<Vec<Vec<f64>>>>,
}

pub fn deflated_series(ens: &PathEnsemble, maturities: &[f64], indices: &[usize]) -> Result<DeflatedSeries> {
    let mpos = maturities
        .iter()
        .map(|&m| {
            ens.maturity_index(m)
                .ok_or_else(|| Error::Domain(format!("maturity {m} is not on the recorded maturity grid")))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = indices.iter().find(|i| **i > ens.m) {
        return Err(Error::Domain(format!("index {i} exceeds m = {}", ens.m)));
    }
    let nt = ens.record_steps.len();
    let values = indices
        .iter()
        .map(|&i| {
            mpos.iter()
                .map(|&k| {
                    (0..nt)
                        .map(|r| {
                            ens.paths
                                .iter()
                                .map(|p| {
                                    let s = &p.snapshots[r];
                                    s.deflator / s.numeraire * s.spots[i] * s.bonds[i][k]
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(DeflatedSeries { times: ens.times(), indices: indices.to_vec(), maturities: maturities.to_vec(), values })
}

/// Streaming mean and variance, mergeable across partitions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, o: &Moments) -> Moments {
        if self.n == 0 {
            return *o;
        }
        if o.n == 0 {
            return *self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn of(xs: &[f64]) -> Moments {
        let mut m = Moments::default();
        for &x in xs {
            m.push(x);
        }
        m
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ZScore {
    pub index: usize,
    pub maturity: f64,
    pub t: f64,
    pub initial: f64,
    pub mean: f64,
    pub se: f64,
    pub z: f64,
    pub pass: bool,
}

pub const MIN_PATHS: usize = 100;

/// `(mean_t − value_0) / SE` per (index, maturity); `|z| ≤ 3` passes.
pub fn martingale_zscore(s: &DeflatedSeries, t: f64) -> Result<Vec<ZScore>> {
    let r = s
        .times
        .iter()
        .position(|x| (x - t).abs() <= 1e-9 * t.abs().max(1.0))
        .ok_or_else(|| Error::Domain(format!("time {t} was not recorded")))?;
    let mut out = Vec::new();
    for (a, &i) in s.indices.iter().enumerate() {
        for (b, &m) in s.maturities.iter().enumerate() {
            let xs = &s.values[a][b][r];
            if xs.len() < MIN_PATHS {
                return Err(Error::InsufficientSample { have: xs.len(), need: MIN_PATHS });
            }
            if m + 1e-12 < t {
                continue;
            }
            let initial = Moments::of(&s.values[a][b][0]).mean;
            let mo = Moments::of(xs);
            let se = mo.se();
            let diff = mo.mean - initial;
            let z = if se > 0.0 {
                diff / se
            } else if diff.abs() <= 1e-14 * initial.abs().max(1.0) {
                0.0
            } else {
                diff.signum() * f64::INFINITY
            };
            out.push(ZScore { index: i, maturity: m, t, initial, mean: mo.mean, se, z, pass: z.abs() <= 3.0 });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct YReport {
    pub index: usize,
    pub maturity: f64,
    pub max_rel_gap: f64,
    pub worst_path: usize,
    pub worst_t: f64,
}

struct YTrack {
    i: usize,
    scale: f64,
    log_cont: f64,
    jump: f64,
    max_gap: f64,
    worst_t: f64,
}

struct YObserver {
    maturity: f64,
    tracks: Vec<YTrack>,
}

impl YTrack {
    fn step(&mut self, maturity: f64, pre: &PathState, info: &StepInfo, post: &PathState) -> Result<()> {
        let i = self.i;
        let tau = maturity - pre.t;
        let dt = info.dt;
        let terms = info.terms;
        let b = info.b(i);
        let mut ds = info.a[i] - info.r + pre.family.get(i).h0() - terms.alpha.get(i).integral(tau)?;
        let mut dw_part = 0.0;
        let mut qv = 0.0;
        for (j, beta) in terms.beta[i].iter().enumerate() {
            let bar = beta.integral(tau)?;
            ds += 0.5 * bar * bar - bar * b[j];
            dw_part += (b[j] - bar) * info.inputs.dw[j];
            qv += (b[j] - bar) * (b[j] - bar);
        }
        let mut comp = 0.0;
        for &(x, w) in info.spec.jumps.rule() {
            let gbar = info.gamma_bar(x, i, tau)?;
            comp += w * (info.c(i, x) - gbar);
        }
        self.log_cont += dw_part + ds * dt - dt * comp - 0.5 * qv * dt;
        for &x in &info.inputs.jumps {
            let gbar = info.gamma_bar(x, i, tau)?;
            self.jump *= (1.0 + info.c(i, x)) * (-gbar).exp();
        }
        let rep = self.scale * self.log_cont.exp() * self.jump;
        let direct = post.spots[i] * bond_price(post.family.get(i), maturity - post.t)? / post.numeraire;
        let gap = if direct == 0.0 && rep == 0.0 {
            0.0
        } else {
            (rep - direct).abs() / direct.abs()
        };
        if gap > self.max_gap || gap.is_nan() {
            self.max_gap = if gap.is_nan() { f64::INFINITY } else { gap };
            self.worst_t = post.t;
        }
        Ok(())
    }
}

impl PathObserver for YObserver {
    fn observe(&mut self, pre: &PathState, info: &StepInfo, post: &PathState) -> Result<()> {
        if post.t > self.maturity + 1e-12 {
            return Ok(());
        }
        for tr in &mut self.tracks {
            tr.step(self.maturity, pre, info, post)?;
        }
        Ok(())
    }
}

/// Compares the discounted price `(X⁰)^{-1} S^i B^i(·,T)` with its
/// representation `S^i_0 B^i(0,T) E(Y^i(·,T))` along simulated paths.
pub fn y_representation_check(cfg: &SimConfig, spec: &ModelSpec, i: usize, maturity: f64) -> Result<YReport> {
    y_representation_check_with(cfg, spec, i, maturity, stream_noise(cfg, spec))
}

pub fn y_representation_check_with<G>(
    cfg: &SimConfig,
    spec: &ModelSpec,
    i: usize,
    maturity: f64,
    noise: G,
) -> Result<YReport>
where
    G: Fn(usize) -> Box<dyn Noise> + Sync,
{
    Ok(y_representation_checks(cfg, spec, &[i], maturity, noise)?.remove(0))
}

/// Several indices along the same simulated paths.
pub fn y_representation_checks<G>(
    cfg: &SimConfig,
    spec: &ModelSpec,
    indices: &[usize],
    maturity: f64,
    noise: G,
) -> Result<Vec<YReport>>
where
    G: Fn(usize) -> Box<dyn Noise> + Sync,
{
    if let Some(&i) = indices.iter().find(|&&i| i > spec.m) {
        return Err(Error::Domain(format!("index {i} exceeds m = {}", spec.m)));
    }
    let s0 = PathState::initial(spec, &cfg.grid)?;
    let scales = indices
        .iter()
        .map(|&i| Ok(s0.spots[i] * bond_price(s0.family.get(i), maturity)?))
        .collect::<Result<Vec<_>>>()?;
    let obs = simulate_observed(cfg, spec, noise, |_| YObserver {
        maturity,
        tracks: indices
            .iter()
            .zip(&scales)
            .map(|(&i, &scale)| YTrack { i, scale, log_cont: 0.0, jump: 1.0, max_gap: 0.0, worst_t: 0.0 })
            .collect(),
    })?;
    let mut out: Vec<YReport> = indices
        .iter()
        .map(|&i| YReport { index: i, maturity, max_rel_gap: 0.0, worst_path: 0, worst_t: 0.0 })
        .collect();
    for (p, o) in obs.iter().enumerate() {
        for (rep, tr) in out.iter_mut().zip(&o.tracks) {
            if tr.max_gap > rep.max_rel_gap {
                rep.max_rel_gap = tr.max_gap;
                rep.worst_path = p;
                rep.worst_t = tr.worst_t;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model_spec::{JumpMeasure, MarkFn, TimeFn};

    #[test]
    fn lmd_step_examples() {
        let mut spec = ModelSpec::new(1, 1);
        let quiet = StepInputs { dw: vec![0.1], jumps: vec![] };
        assert_eq!(lmd_step(2.0, 0.01, &quiet, &spec, 0.0), 2.0);
        spec.market_price.lambda = vec![TimeFn::Constant(0.2)];
        let z = lmd_step(1.0, 0.01, &quiet, &spec, 0.0);
        assert!((z - 0.0198f64.exp()).abs() < 1e-15);
        let mut spec = ModelSpec::new(1, 1);
        spec.jumps = JumpMeasure::atoms(vec![1.0], vec![1e-300]).unwrap();
        spec.market_price.psi = MarkFn::Constant(-0.5);
        let z = lmd_step(1.0, 0.01, &StepInputs { dw: vec![0.0], jumps: vec![1.0] }, &spec, 0.0);
        assert!((z - 0.5).abs() < 1e-15);
    }

    #[test]
    fn moments_merge_is_consistent() {
        let xs: Vec<f64> = (0..100).map(|k| (k as f64 * 0.37).sin()).collect();
        let a = Moments::of(&xs[..30]);
        let b = Moments::of(&xs[30..]);
        let m = a.merge(&b);
        let all = Moments::of(&xs);
        assert!((m.mean - all.mean).abs() < 1e-15);
        assert!((m.variance() - all.variance()).abs() < 1e-14);
    }

    #[test]
    fn zero_model_has_zero_gap() {
        let g = Grid::new(0.01, 1.0, 3.0).unwrap();
        let spec = ModelSpec::new(1, 1);
        let cfg = SimConfig::new(g, 3, 1);
        let r = y_representation_check(&cfg, &spec, 1, 2.0).unwrap();
        assert_eq!(r.max_rel_gap, 0.0);
    }

    #[test]
    fn small_samples_are_rejected() {
        let g = Grid::new(0.01, 0.1, 3.0).unwrap();
        let spec = ModelSpec::new(1, 1);
        let mut cfg = SimConfig::new(g, 10, 1);
        cfg.maturities = vec![1.0];
        let ens = crate::spde_solver::simulate(&cfg, &spec).unwrap();
        let s = deflated_series(&ens, &[1.0], &[0, 1]).unwrap();
        assert!(matches!(martingale_zscore(&s, 0.1), Err(Error::InsufficientSample { .. })));
        assert!(deflated_series(&ens, &[1.5], &[0]).is_err());
    }
}
