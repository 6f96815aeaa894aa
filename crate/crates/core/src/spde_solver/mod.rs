//! Mild Euler scheme for the forward-curve SPDE.
//!
//! One step of size `Δt = Δξ` maps the state to
//!
//! ```text
//! η ← S_Δt [ η + α Δt + β ΔW + Σ γ(η, x_j) − Δt ∫ γ dF ]
//! ```
//!
//! and updates spots by their one-step stochastic exponential, the bank
//! account by `exp(r Δt)` and the deflator by its exact exponential factor.

mod additive;
mod ensemble;
mod noise;

use rayon::prelude::*;
use serde::Serialize;

pub use ensemble::{record_steps, PathEnsemble, PathRecord, Snapshot};
pub use noise::{
    brownian_increments, coarsen, path_rng, Noise, ReplayNoise, StepInputs, StreamNoise,
};

use crate::curve_space::{Curve, CurveFamily};
use crate::deflator::lmd_step;
use crate::drift_engine::{drift_terms, short_end_drift, short_rate, DriftInputs, DriftTerms};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model_spec::{ModelSpec, SpotDrift};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathState {
    pub step: usize,
    pub t: f64,
    pub family: CurveFamily,
    /// `S^i_t`, with `S^0 ≡ 1`.
    pub spots: Vec<f64>,
    pub numeraire: f64,
    pub deflator: f64,
}

impl PathState {
    pub fn initial(spec: &ModelSpec, grid: &Grid) -> Result<Self> {
        Ok(PathState {
            step: 0,
            t: 0.0,
            family: spec.initial_family(grid)?,
            spots: spec.initial_spots.clone(),
            numeraire: 1.0,
            deflator: 1.0,
        })
    }
}

fn check_dt(dt: f64, step: f64) -> Result<()> {
    if (dt - step).abs() <= 1e-12 * step {
        Ok(())
    } else {
        Err(Error::Grid(format!(
            "grid contract violated: time step {dt} differs from maturity spacing {step}"
        )))
    }
}

/// Spot drifts `a^i_t` (entry 0 is zero).
pub fn spot_drift(spec: &ModelSpec, t: f64, family: &CurveFamily) -> Vec<f64> {
    match &spec.spot.drift {
        SpotDrift::Consistent => {
            let mut a = short_end_drift(&DriftInputs::new(family, t, spec));
            a[0] = 0.0;
            a
        }
        SpotDrift::Given(f) => f.iter().map(|f| f.eval(t)).collect(),
    }
}

/// `S ← S (1 + a Δt + b·ΔW − Δt ∫ c dF) Π (1 + c(x_j))`, absorbing at 0.
pub fn spot_update(
    spec: &ModelSpec,
    t: f64,
    dt: f64,
    spots: &mut [f64],
    a: &[f64],
    inp: &StepInputs,
) -> Result<()> {
    for i in 1..spots.len() {
        if spots[i] == 0.0 {
            continue;
        }
        let c = &spec.spot.c[i];
        let bw: f64 = spec.spot.b[i].iter().zip(&inp.dw).map(|(b, w)| b.eval(t) * w).sum();
        let comp = if spec.jumps.is_none() || c.is_zero() { 0.0 } else { spec.jumps.integrate(|x| c.eval(t, x)) };
        let cont = 1.0 + a[i] * dt + bw - dt * comp;
        if cont < 0.0 {
            return Err(Error::SchemeViolation { t, index: i, factor: cont });
        }
        let mut f = cont;
        for &x in &inp.jumps {
            f *= (1.0 + c.eval(t, x)).max(0.0);
        }
        spots[i] = if f > 0.0 { spots[i] * f } else { 0.0 };
    }
    Ok(())
}

/// What a step used, handed to observers.
pub struct StepInfo<'a> {
    pub dt: f64,
    pub t: f64,
    pub spec: &'a ModelSpec,
    /// State before the step.
    pub family: &'a CurveFamily,
    pub inputs: &'a StepInputs,
    pub terms: &'a DriftTerms,
    /// Spot drifts used for the step.
    pub a: &'a [f64],
    pub r: f64,
}

impl StepInfo<'_> {
    pub fn b(&self, i: usize) -> Vec<f64> {
        self.spec.b(i, self.t)
    }

    pub fn c(&self, i: usize, x: f64) -> f64 {
        self.spec.spot.c[i].eval(self.t, x)
    }

    /// `γ̄^i(x)(τ)` at the pre-step state.
    pub fn gamma_bar(&self, x: f64, i: usize, tau: f64) -> Result<f64> {
        match self.spec.gamma(self.family, x) {
            Some(g) => g[i].integral(tau),
            None => Ok(0.0),
        }
    }
}

pub fn euler_step(s: &PathState, dt: f64, inp: &StepInputs, spec: &ModelSpec) -> Result<PathState> {
    let (next, _, _, _) = step_with_terms(s, dt, inp, spec)?;
    Ok(next)
}

fn step_with_terms(
    s: &PathState,
    dt: f64,
    inp: &StepInputs,
    spec: &ModelSpec,
) -> Result<(PathState, DriftTerms, Vec<f64>, f64)> {
    check_dt(dt, s.family.grid_step())?;
    let terms = drift_terms(&DriftInputs::new(&s.family, s.t, spec))?;
    let a = spot_drift(spec, s.t, &s.family);
    let r = short_rate(spec, s.t, &s.family);

    let mut curves: Vec<Curve> = s.family.curves().to_vec();
    let gammas: Vec<Vec<Curve>> = inp.jumps.iter().filter_map(|&x| spec.gamma(&s.family, x)).collect();
    for (i, c) in curves.iter_mut().enumerate() {
        c.axpy(terms.alpha.get(i), dt);
        for (b, w) in terms.beta[i].iter().zip(&inp.dw) {
            c.axpy(b, *w);
        }
        for g in &gammas {
            c.axpy(&g[i], 1.0);
        }
        if let Some(comp) = &terms.compensator {
            c.axpy(&comp[i], -dt);
        }
        c.shift_steps_in_place(1);
    }
    let mut spots = s.spots.clone();
    spot_update(spec, s.t, dt, &mut spots, &a, inp)?;
    let step = s.step + 1;
    let next = PathState {
        step,
        t: step as f64 * dt,
        family: CurveFamily::new(curves)?,
        spots,
        numeraire: s.numeraire * (r * dt).exp(),
        deflator: lmd_step(s.deflator, dt, inp, spec, s.t),
    };
    Ok((next, terms, a, r))
}

/// `B(t, t+τ) = exp(−∫₀^τ η)`.
pub fn bond_price(c: &Curve, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) || tau > c.horizon() * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("tau = {tau} outside [0, {}]", c.horizon())));
    }
    Ok((-c.integral(tau.min(c.horizon()))?).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Additive recursion when the volatilities allow it, full curves otherwise.
    #[default]
    Auto,
    Generic,
    Additive,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub grid: Grid,
    pub n_paths: usize,
    pub seed: u64,
    /// Absolute maturities `T` at which bond prices are recorded.
    pub maturities: Vec<f64>,
    /// Record every this many steps; 0 records the first and last step only.
    pub record_every: usize,
    pub keep_curves: bool,
    pub method: Method,
    pub max_bytes: u64,
}

impl SimConfig {
    pub fn new(grid: Grid, n_paths: usize, seed: u64) -> Self {
        SimConfig {
            grid,
            n_paths,
            seed,
            maturities: Vec::new(),
            record_every: 0,
            keep_curves: false,
            method: Method::Auto,
            max_bytes: 4 << 30,
        }
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        spec.check_structure()?;
        if self.n_paths == 0 {
            return Err(Error::Parameter("at least one path is required".into()));
        }
        for &m in &self.maturities {
            if !(m >= 0.0) || m > self.grid.horizon_xi() - self.grid.step() {
                return Err(Error::Domain(format!(
                    "maturity {m} outside the maturity horizon {}",
                    self.grid.horizon_xi()
                )));
            }
            if self.grid.index_of(m).is_none() {
                return Err(Error::Domain(format!("maturity {m} is off the grid")));
            }
        }
        let records = record_steps(self.grid.n_t(), self.record_every).len() as u64;
        let n = (spec.m + 1) as u64;
        let per = 8 * (n * (2 + self.maturities.len() as u64) + 4)
            + if self.keep_curves { 8 * n * (self.grid.n_xi() as u64 + 2) } else { 0 };
        let requested = self.n_paths as u64 * records * per;
        if requested > self.max_bytes {
            return Err(Error::EnsembleTooLarge { requested, limit: self.max_bytes });
        }
        Ok(())
    }
}

fn snapshot(s: &PathState, maturities: &[f64], keep: bool) -> Result<Snapshot> {
    let bonds = s
        .family
        .curves()
        .iter()
        .map(|c| {
            maturities
                .iter()
                .map(|&m| if m + 1e-12 < s.t { Ok(f64::NAN) } else { bond_price(c, (m - s.t).max(0.0)) })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Snapshot {
        step: s.step,
        t: s.t,
        spots: s.spots.clone(),
        short_ends: s.family.curves().iter().map(|c| c.h0()).collect(),
        numeraire: s.numeraire,
        deflator: s.deflator,
        bonds,
        family: keep.then(|| s.family.clone()),
    })
}

/// Runs one path with the generic scheme, calling `observe` after each step.
pub fn run_path<N: Noise + ?Sized>(
    spec: &ModelSpec,
    grid: &Grid,
    noise: &mut N,
    mut observe: impl FnMut(&PathState, &StepInfo, &PathState) -> Result<()>,
) -> Result<PathState> {
    let mut s = PathState::initial(spec, grid)?;
    let mut inp = StepInputs::quiet(spec.factors);
    for k in 0..grid.n_t() {
        noise.draw(k, &mut inp);
        let (next, terms, a, r) = step_with_terms(&s, grid.step(), &inp, spec)?;
        let info = StepInfo { dt: grid.step(), t: s.t, spec, family: &s.family, inputs: &inp, terms: &terms, a: &a, r };
        observe(&s, &info, &next)?;
        s = next;
    }
    Ok(s)
}

fn generic_path(cfg: &SimConfig, spec: &ModelSpec, path: usize, steps: &[usize]) -> Result<PathRecord> {
    let mut noise = StreamNoise::new(cfg.seed, path, spec.factors, cfg.grid.step(), &spec.jumps);
    let s0 = PathState::initial(spec, &cfg.grid)?;
    let mut snaps = vec![snapshot(&s0, &cfg.maturities, cfg.keep_curves)?];
    let mut next_rec = 1;
    run_path(spec, &cfg.grid, &mut noise, |_, _, post| {
        if next_rec < steps.len() && post.step == steps[next_rec] {
            snaps.push(snapshot(post, &cfg.maturities, cfg.keep_curves)?);
            next_rec += 1;
        }
        Ok(())
    })?;
    Ok(PathRecord { snapshots: snaps })
}

/// Whether the additive recursion applies to `spec`.
pub fn additive_eligible(spec: &ModelSpec) -> bool {
    additive::eligible(spec)
}

pub fn simulate(cfg: &SimConfig, spec: &ModelSpec) -> Result<PathEnsemble> {
    cfg.check(spec)?;
    let steps = record_steps(cfg.grid.n_t(), cfg.record_every);
    let use_additive = match cfg.method {
        Method::Generic => false,
        Method::Additive => {
            if !additive::eligible(spec) || cfg.keep_curves {
                return Err(Error::Specification(
                    "the additive recursion needs exponential volatilities and no curve recording".into(),
                ));
            }
            true
        }
        Method::Auto => additive::eligible(spec) && !cfg.keep_curves,
    };
    let paths = if use_additive {
        let plan = additive::Plan::new(cfg, spec, &steps)?;
        (0..cfg.n_paths)
            .into_par_iter()
            .map(|p| plan.path(cfg, spec, p))
            .collect::<Result<Vec<_>>>()?
    } else {
        (0..cfg.n_paths)
            .into_par_iter()
            .map(|p| generic_path(cfg, spec, p, &steps))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(PathEnsemble {
        grid: cfg.grid,
        m: spec.m,
        maturities: cfg.maturities.clone(),
        record_steps: steps,
        paths,
    })
}

/// Runs `n_paths` observed paths in parallel; results come back in path order.
pub fn simulate_observed<O, F, G>(
    cfg: &SimConfig,
    spec: &ModelSpec,
    make_noise: G,
    make_observer: F,
) -> Result<Vec<O>>
where
    O: Send,
    F: Fn(usize) -> O + Sync,
    G: Fn(usize) -> Box<dyn Noise> + Sync,
    O: PathObserver,
{
    spec.check_structure()?;
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut obs = make_observer(p);
            let mut noise = make_noise(p);
            run_path(spec, &cfg.grid, noise.as_mut(), |pre, info, post| obs.observe(pre, info, post))?;
            Ok(obs)
        })
        .collect()
}

/// Per-path accumulator driven by [`simulate_observed`].
pub trait PathObserver {
    fn observe(&mut self, pre: &PathState, info: &StepInfo, post: &PathState) -> Result<()>;
}

/// Standard noise factory for [`simulate_observed`].
pub fn stream_noise(cfg: &SimConfig, spec: &ModelSpec) -> impl Fn(usize) -> Box<dyn Noise> + Sync {
    let (seed, factors, dt, jumps) = (cfg.seed, spec.factors, cfg.grid.step(), spec.jumps.clone());
    move |p| Box::new(StreamNoise::new(seed, p, factors, dt, &jumps)) as Box<dyn Noise>
}
