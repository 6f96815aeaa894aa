//! Admissibility checks on a [`ModelSpec`].
//!
//! Conditions that quantify over the whole state space are checked on
//! randomized curves. The report says so: a sampled certificate is not a proof.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{JumpVolSpec, ModelSpec, SpotDrift, VolSpec};
use crate::curve_space::{constants, w_k, CurveFamily, SpaceParams};
use crate::error::Result;
use crate::grid::Grid;
use crate::sampling::random_family_with_norm;

#[derive(Debug, Clone, Serialize)]
pub struct ValidationOptions {
    pub seed: u64,
    /// Random states per radius shell.
    pub samples: usize,
    /// Largest state norm sampled.
    pub radius: f64,
    /// Constant `M_β` of the linear-growth bound; estimated from the unit
    /// shell when absent.
    pub beta_growth_bound: Option<f64>,
    /// Time points sampled from the grid.
    pub time_points: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions { seed: 42, samples: 8, radius: 10.0, beta_growth_bound: None, time_points: 16 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionResult {
    pub name: String,
    pub pass: bool,
    /// Worst sampled residual; positive values violate the condition.
    pub worst: f64,
    pub sampled: bool,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub conditions: Vec<ConditionResult>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn cond(name: &str, worst: f64, sampled: bool, note: String) -> ConditionResult {
    ConditionResult { name: name.into(), pass: worst <= 0.0 && !worst.is_nan(), worst, sampled, note }
}

fn time_lattice(grid: &Grid, points: usize) -> Vec<f64> {
    let n = grid.n_t();
    let p = points.max(1).min(n + 1);
    let mut ts: Vec<f64> = (0..p).map(|k| grid.time(if p == 1 { 0 } else { k * n / (p - 1) })).collect();
    ts.dedup();
    ts
}

pub fn validate_spec(
    spec: &ModelSpec,
    p: SpaceParams,
    grid: &Grid,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    spec.check_structure()?;
    p.check()?;
    let n = spec.m + 1;
    let ts = time_lattice(grid, opts.time_points);
    let marks: Vec<f64> = spec.jumps.rule().iter().map(|(x, _)| *x).collect();
    let mut out = Vec::new();

    // Finiteness of the spot coefficients and the short rate on the lattice.
    let mut bad = 0usize;
    for &t in &ts {
        for i in 0..n {
            bad += spec.b(i, t).iter().filter(|v| !v.is_finite()).count();
            if let SpotDrift::Given(a) = &spec.spot.drift {
                bad += usize::from(!a[i].eval(t).is_finite());
            }
            for &x in &marks {
                bad += usize::from(!spec.spot.c[i].eval(t, x).is_finite());
            }
        }
        if let super::ShortRateSpec::Given(r) = &spec.short_rate {
            bad += usize::from(!r.eval(t).is_finite());
        }
        bad += spec.market_price.lambda.iter().filter(|f| !f.eval(t).is_finite()).count();
    }
    out.push(cond("finite-coefficients", bad as f64, false, format!("{bad} non-finite lattice values")));

    // c > -1 and psi > -1.
    let mut worst = f64::NEG_INFINITY;
    let mut arg = String::from("no jump marks");
    for &t in &ts {
        for &x in &marks {
            let psi = spec.market_price.psi.eval(t, x);
            if -1.0 - psi > worst {
                worst = -1.0 - psi;
                arg = format!("psi({t}, {x}) = {psi}");
            }
            for i in 1..n {
                let c = spec.spot.c[i].eval(t, x);
                if -1.0 - c >= worst {
                    worst = -1.0 - c;
                    arg = format!("c^{i}({t}, {x}) = {c}");
                }
            }
        }
    }
    if marks.is_empty() {
        worst = -1.0;
    }
    // The boundary value -1 itself is excluded.
    let pos = ConditionResult {
        name: "jump-positivity".into(),
        pass: worst < 0.0,
        worst,
        sampled: false,
        note: format!("worst: {arg}"),
    };
    out.push(pos);

    // |(1+psi)(1+c^i)| <= Lambda kappa(x).
    let mut worst = if marks.is_empty() { 0.0 } else { f64::NEG_INFINITY };
    let lam = spec.market_price.lambda_bound;
    for &t in &ts {
        for &x in &marks {
            let psi = spec.market_price.psi.eval(t, x);
            let kap = spec.market_price.kappa.eval(t, x);
            for i in 0..n {
                let c = spec.spot.c[i].eval(t, x);
                worst = f64::max(worst, ((1.0 + psi) * (1.0 + c)).abs() - lam * kap);
            }
        }
    }
    out.push(cond("est-psi-c", worst, false, format!("Lambda = {lam}")));

    // Decay of exponential volatilities.
    let mut worst = f64::NEG_INFINITY;
    let mut note = String::from("no exponential volatilities");
    if let VolSpec::VasicekExp { delta, .. } = &spec.vol {
        for (i, d) in delta.iter().enumerate() {
            if d + 0.5 * p.rho > worst {
                worst = d + 0.5 * p.rho;
                note = format!("delta_{i} = {d} against -rho/2 = {}", -0.5 * p.rho);
            }
        }
    }
    if let JumpVolSpec::ExpMark { eps, g } = &spec.jump_vol {
        for (i, e) in eps.iter().enumerate() {
            if g[i] != 0.0 && e + 0.5 * p.rho_prime > worst {
                worst = e + 0.5 * p.rho_prime;
                note = format!("eps_{i} = {e} against -rho'/2 = {}", -0.5 * p.rho_prime);
            }
        }
    }
    if worst == f64::NEG_INFINITY {
        worst = -1.0;
    }
    let dec = ConditionResult {
        name: "admissible-decay".into(),
        pass: worst < 0.0,
        worst,
        sampled: false,
        note,
    };
    out.push(dec);

    // Sampled growth bounds.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let radii: Vec<f64> = {
        let mut r = vec![0.0, 0.5, 1.0];
        let mut x = 2.0;
        while x <= opts.radius {
            r.push(x);
            x *= 2.0;
        }
        if opts.radius > 1.0 && !r.contains(&opts.radius) {
            r.push(opts.radius);
        }
        r
    };
    let mut states: Vec<(f64, CurveFamily)> = Vec::new();
    for &r in &radii {
        for _ in 0..opts.samples.max(1) {
            states.push((r, random_family_with_norm(&mut rng, grid, spec.m, p.rho, r)));
        }
    }

    let beta_norm = |f: &CurveFamily| -> Result<f64> {
        let mut s = 0.0;
        for row in spec.beta(f) {
            for c in row {
                let x = c.norm(p.rho)?;
                s += x * x;
            }
        }
        Ok(s.sqrt())
    };
    let mut unit_sup: f64 = 0.0;
    let mut ratios = Vec::with_capacity(states.len());
    for (r, f) in &states {
        let h = f.norm(p.rho)?;
        let ratio = beta_norm(f)? / (1.0 + h).sqrt();
        if *r <= 1.0 {
            unit_sup = unit_sup.max(ratio);
        }
        ratios.push(ratio);
    }
    let (m_beta, how) = match opts.beta_growth_bound {
        Some(m) => (m, "configured"),
        None => (unit_sup, "estimated on the unit shell"),
    };
    let worst = ratios.iter().fold(f64::NEG_INFINITY, |w, r| w.max(r - m_beta * (1.0 + 1e-9)));
    out.push(cond(
        "LG-beta",
        worst,
        true,
        format!("M_beta = {m_beta:.6e} ({how}); {} sampled states up to norm {}", states.len(), opts.radius),
    ));

    let k = constants(p)?.k_rho_rhop;
    let mut worst = if marks.is_empty() { 0.0 } else { f64::NEG_INFINITY };
    let mut checked = 0usize;
    if !matches!(spec.jump_vol, JumpVolSpec::Zero) {
        for (_, f) in &states {
            let h = f.norm(p.rho)?;
            for &x in &marks {
                let Some(g) = spec.gamma(f, x) else { continue };
                let mut s = 0.0;
                for c in &g {
                    let v = c.norm(p.rho_prime)?;
                    s += v * v;
                }
                let kap = spec.market_price.kappa.eval(0.0, x);
                let bound = w_k(k, (kap * (1.0 + h)).max(0.0))?.min(kap * (1.0 + h));
                worst = f64::max(worst, s.sqrt() - bound);
                checked += 1;
            }
        }
    } else if !marks.is_empty() {
        worst = 0.0;
    }
    out.push(cond(
        "int-E-3",
        worst,
        true,
        format!("{checked} sampled (state, mark) pairs, K = {k:.6}"),
    ));

    Ok(ValidationReport { conditions: out })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OrderViolation {
    pub i: usize,
    pub j: usize,
    pub t: f64,
    pub gap: f64,
    pub what: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderReport {
    pub pass: bool,
    /// True when the drifts come from the short-end rule, in which case the
    /// ordering of drifts follows from the ordering of the curves.
    pub implied_by_cone: bool,
    pub violation: Option<OrderViolation>,
}

/// Ordering of cumulative spot drifts and equality of the risky loadings.
pub fn check_order_condition(spec: &ModelSpec, grid: &Grid) -> OrderReport {
    let n = spec.m + 1;
    let marks: Vec<f64> = spec.jumps.rule().iter().map(|(x, _)| *x).collect();
    for k in 0..=grid.n_t() {
        let t = grid.time(k);
        if n > 2 {
            let b1 = spec.b(1, t);
            for j in 2..n {
                let bj = spec.b(j, t);
                let gap = b1.iter().zip(&bj).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                if gap > 0.0 {
                    return fail(1, j, t, gap, "diffusion loadings b differ");
                }
                for &x in &marks {
                    let gap = (spec.spot.c[1].eval(t, x) - spec.spot.c[j].eval(t, x)).abs();
                    if gap > 0.0 {
                        return fail(1, j, t, gap, &format!("jump loadings c differ at mark {x}"));
                    }
                }
            }
        }
        if let SpotDrift::Given(a) = &spec.spot.drift {
            if k == 0 {
                continue;
            }
            for i in 1..n {
                for j in i + 1..n {
                    let gap = a[i].integral(0.0, t) - a[j].integral(0.0, t);
                    if gap > 1e-15 * t.max(1.0) {
                        return fail(i, j, t, gap, "cumulative drift of the lower index exceeds the higher");
                    }
                }
            }
        }
    }
    OrderReport {
        pass: true,
        implied_by_cone: matches!(spec.spot.drift, SpotDrift::Consistent),
        violation: None,
    }
}

fn fail(i: usize, j: usize, t: f64, gap: f64, what: &str) -> OrderReport {
    OrderReport {
        pass: false,
        implied_by_cone: false,
        violation: Some(OrderViolation { i, j, t, gap, what: what.into() }),
    }
}
