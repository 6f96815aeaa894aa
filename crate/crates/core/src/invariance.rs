//! Ordered term structures.
//!
//! The cone `K = {h : h^1 ≥ h^2 ≥ … ≥ h^m}` (the riskless curve is left out)
//! is invariant for the forward-curve dynamics when the volatilities agree at
//! touching points and dominate one-sidedly before them. Together with ordered
//! spot drifts this orders the prices `S^i B^i(·, T)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::curve_space::{Curve, CurveFamily};
use crate::error::Result;
use crate::grid::Grid;
use crate::model_spec::{check_order_condition, ModelSpec};
use crate::sampling::random_cone_family;
use crate::spde_solver::{simulate_observed, stream_noise, PathEnsemble, PathObserver, PathState, SimConfig, StepInfo};

pub const CONE_TOL: f64 = 1e-12;
pub const PRICE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConeViolation {
    pub i: usize,
    pub j: usize,
    pub xi: f64,
    /// `h^j(ξ) − h^i(ξ)`; positive values leave the cone.
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeReport {
    pub member: bool,
    pub worst: Option<ConeViolation>,
    pub note: String,
}

/// Largest `h^j − h^i` over risky `i < j` and the grid nodes.
pub fn cone_gap(f: &CurveFamily) -> Option<ConeViolation> {
    let m = f.m();
    if m < 2 {
        return None;
    }
    let vals: Vec<Vec<f64>> = f.curves()[1..].iter().map(|c| c.node_values()).collect();
    let dx = f.grid_step();
    let mut worst: Option<ConeViolation> = None;
    for a in 0..m {
        for b in a + 1..m {
            for (k, (x, y)) in vals[a].iter().zip(&vals[b]).enumerate() {
                let gap = y - x;
                if worst.as_ref().is_none_or(|w| gap > w.gap) {
                    worst = Some(ConeViolation { i: a + 1, j: b + 1, xi: k as f64 * dx, gap });
                }
            }
        }
    }
    worst
}

pub fn cone_membership(f: &CurveFamily, tol: f64) -> ConeReport {
    if f.m() < 2 {
        return ConeReport { member: true, worst: None, note: "fewer than two risky curves: vacuous".into() };
    }
    let worst = cone_gap(f);
    let member = worst.as_ref().is_none_or(|w| w.gap <= tol);
    ConeReport { member, worst, note: String::new() }
}

#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    pub i: usize,
    pub j: usize,
    pub xi_star: f64,
    pub detail: String,
    pub family: CurveFamily,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoeffCondition {
    pub name: String,
    pub pass: bool,
    pub checked: usize,
    pub counterexample: Option<Counterexample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoeffReport {
    pub pass: bool,
    pub samples: usize,
    pub conditions: Vec<CoeffCondition>,
}

struct Tally {
    name: &'static str,
    checked: usize,
    ce: Option<Counterexample>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally { name, checked: 0, ce: None }
    }

    fn record(&mut self, ok: bool, f: impl FnOnce() -> Counterexample) {
        self.checked += 1;
        if !ok && self.ce.is_none() {
            self.ce = Some(f());
        }
    }

    fn finish(self) -> CoeffCondition {
        CoeffCondition { name: self.name.into(), pass: self.ce.is_none(), checked: self.checked, counterexample: self.ce }
    }
}

/// Equality at `ξ*` and one-sided dominance on `[0, ξ*)` for one pair of curves.
fn touching_conditions(vi: &[f64], vj: &[f64], k: usize) -> (Option<String>, Option<String>) {
    let scale = vi[k].abs().max(vj[k].abs()).max(1e-300);
    let eq = if (vi[k] - vj[k]).abs() > 1e-9 * scale {
        Some(format!("values at the touching point differ: {} vs {}", vi[k], vj[k]))
    } else {
        None
    };
    let s = vi[k];
    let mut dom = None;
    if s != 0.0 {
        for q in 0..k {
            let d = vi[q] - vj[q];
            let tol = 1e-9 * vi[q].abs().max(vj[q].abs());
            if (s > 0.0 && d < -tol) || (s < 0.0 && d > tol) {
                dom = Some(format!(
                    "dominance fails at node {q}: {} vs {} (sign at touching point {})",
                    vi[q], vj[q], s.signum()
                ));
                break;
            }
        }
    }
    (eq, dom)
}

/// Sampled check of the coefficient conditions for invariance of `K`.
pub fn check_cone_coeff_conditions(spec: &ModelSpec, grid: &Grid, samples: usize, seed: u64) -> Result<CoeffReport> {
    spec.check_structure()?;
    let m = spec.m;
    let mut beta_eq = Tally::new("cone-2-1");
    let mut beta_dom = Tally::new("cone-2-2/3");
    let mut gamma_eq = Tally::new("cone-4-1");
    let mut gamma_dom = Tally::new("cone-4-2/3");
    let mut jump_in = Tally::new("cone-1");
    let marks: Vec<f64> = spec.jumps.rule().iter().map(|(x, _)| *x).collect();
    let has_gamma = !matches!(spec.jump_vol, crate::model_spec::JumpVolSpec::Zero) && !marks.is_empty();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dx = grid.step();
    let reach = 0.5 * grid.horizon_xi();
    if m >= 2 {
        for s in 0..samples {
            let touch = if s % 4 == 3 {
                None
            } else {
                Some((rng.random_range(1..m), rng.random_range(dx..reach)))
            };
            let h = random_cone_family(&mut rng, grid, m, 0.02, touch);
            let vals: Vec<Vec<f64>> = h.curves().iter().map(|c| c.node_values()).collect();
            let mut touchings = Vec::new();
            for i in 1..=m {
                for j in i + 1..=m {
                    for k in 0..vals[i].len() {
                        if (vals[i][k] - vals[j][k]).abs() <= CONE_TOL {
                            touchings.push((i, j, k));
                        }
                    }
                }
            }
            let beta = spec.beta(&h);
            let bvals: Vec<Vec<Vec<f64>>> =
                beta.iter().map(|row| row.iter().map(|c| c.node_values()).collect()).collect();
            let gammas: Vec<(f64, Vec<Curve>)> = if has_gamma {
                marks.iter().filter_map(|&x| spec.gamma(&h, x).map(|g| (x, g))).collect()
            } else {
                Vec::new()
            };
            for &(i, j, k) in &touchings {
                for f in 0..spec.factors {
                    let (eq, dom) = touching_conditions(&bvals[i][f], &bvals[j][f], k);
                    let ce = |d: String| Counterexample { i, j, xi_star: k as f64 * dx, detail: format!("beta factor {f}: {d}"), family: h.clone() };
                    beta_eq.record(eq.is_none(), || ce(eq.clone().unwrap_or_default()));
                    beta_dom.record(dom.is_none(), || ce(dom.clone().unwrap_or_default()));
                }
                for (x, g) in &gammas {
                    let (gi, gj) = (g[i].node_values(), g[j].node_values());
                    let (eq, dom) = touching_conditions(&gi, &gj, k);
                    let ce = |d: String| Counterexample { i, j, xi_star: k as f64 * dx, detail: format!("gamma at mark {x}: {d}"), family: h.clone() };
                    gamma_eq.record(eq.is_none(), || ce(eq.clone().unwrap_or_default()));
                    gamma_dom.record(dom.is_none(), || ce(dom.clone().unwrap_or_default()));
                }
            }
            let base = cone_gap(&h).map(|w| w.gap).unwrap_or(0.0).max(0.0);
            for (x, g) in &gammas {
                let moved: Vec<Curve> = h
                    .curves()
                    .iter()
                    .zip(g)
                    .map(|(c, gc)| {
                        let mut c = c.clone();
                        c.axpy(gc, 1.0);
                        c
                    })
                    .collect();
                let moved = CurveFamily::new(moved)?;
                let w = cone_gap(&moved);
                let ok = w.as_ref().is_none_or(|w| w.gap <= base + CONE_TOL);
                jump_in.record(ok, || {
                    let w = w.clone().expect("violation present");
                    Counterexample {
                        i: w.i,
                        j: w.j,
                        xi_star: w.xi,
                        detail: format!("h + gamma(h, {x}) leaves the cone by {:e}", w.gap),
                        family: h.clone(),
                    }
                });
            }
        }
    }
    let conditions: Vec<CoeffCondition> =
        vec![beta_eq.finish(), beta_dom.finish(), jump_in.finish(), gamma_eq.finish(), gamma_dom.finish()];
    Ok(CoeffReport { pass: conditions.iter().all(|c| c.pass), samples, conditions })
}

#[derive(Debug, Clone, Serialize)]
pub struct PriceViolation {
    pub path: usize,
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub maturity: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Preconditions {
    pub order_condition: bool,
    pub spots_ordered: bool,
    pub initial_in_cone: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub pass: bool,
    pub preconditions: Preconditions,
    pub checked: usize,
    pub violations: usize,
    pub worst: Option<PriceViolation>,
}

pub fn preconditions(spec: &ModelSpec, grid: &Grid) -> Result<Preconditions> {
    let spots = &spec.initial_spots;
    Ok(Preconditions {
        order_condition: check_order_condition(spec, grid).pass,
        spots_ordered: (1..spots.len()).all(|i| (i + 1..spots.len()).all(|j| spots[i] <= spots[j])),
        initial_in_cone: cone_membership(&spec.initial_family(grid)?, CONE_TOL).member,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PriceOrdering {
    pub checked: usize,
    pub violations: usize,
    pub worst: Option<PriceViolation>,
}

/// `S^i_t B^i(t,T) ≤ S^j_t B^j(t,T)` for risky `i < j` over a recorded ensemble.
pub fn price_ordering(ens: &PathEnsemble) -> PriceOrdering {
    let mut checked = 0;
    let mut violations = 0;
    let mut worst: Option<PriceViolation> = None;
    for (p, rec) in ens.paths.iter().enumerate() {
        for s in &rec.snapshots {
            for (k, &mat) in ens.maturities.iter().enumerate() {
                for i in 1..=ens.m {
                    for j in i + 1..=ens.m {
                        let (pi, pj) = (s.spots[i] * s.bonds[i][k], s.spots[j] * s.bonds[j][k]);
                        if pi.is_nan() || pj.is_nan() {
                            continue;
                        }
                        checked += 1;
                        let gap = pi - pj;
                        if gap > PRICE_TOL * pi.abs().max(pj.abs()) {
                            violations += 1;
                            if worst.as_ref().is_none_or(|w| gap > w.gap) {
                                worst = Some(PriceViolation { path: p, t: s.t, i, j, maturity: mat, gap });
                            }
                        }
                    }
                }
            }
        }
    }
    PriceOrdering { checked, violations, worst }
}

pub fn monotonicity_report(ens: &PathEnsemble, spec: &ModelSpec) -> Result<MonotonicityReport> {
    let preconditions = preconditions(spec, &ens.grid)?;
    let o = price_ordering(ens);
    Ok(MonotonicityReport {
        pass: o.violations == 0,
        preconditions,
        checked: o.checked,
        violations: o.violations,
        worst: o.worst,
    })
}

/// Full-grid pathwise scan: cone membership of every state and price
/// ordering for every maturity node.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ScanReport {
    pub paths: usize,
    pub states: usize,
    pub price_pairs: usize,
    pub cone_violations: usize,
    pub price_violations: usize,
    pub worst_cone_gap: f64,
    pub worst_price_gap: f64,
    /// Paths where cone and spot order held throughout.
    pub ordered_paths: usize,
    /// Among those, paths with a price-order violation.
    pub implication_failures: usize,
}

#[derive(Default)]
struct ScanObserver {
    states: usize,
    price_pairs: usize,
    cone_violations: usize,
    price_violations: usize,
    worst_cone: f64,
    worst_price: f64,
    ordered: bool,
}

fn scan_state(o: &mut ScanObserver, s: &PathState) {
    let m = s.family.m();
    o.states += 1;
    if let Some(w) = cone_gap(&s.family) {
        o.worst_cone = o.worst_cone.max(w.gap);
        if w.gap > CONE_TOL {
            o.cone_violations += 1;
            o.ordered = false;
        }
    }
    for i in 1..=m {
        for j in i + 1..=m {
            if s.spots[i] > s.spots[j] {
                o.ordered = false;
            }
        }
    }
    let ints: Vec<Vec<f64>> = s.family.curves()[1..].iter().map(|c| c.integral_nodes()).collect();
    let n_tau = ints[0].len().saturating_sub(1);
    for k in 0..n_tau {
        for a in 0..m {
            for b in a + 1..m {
                let pi = s.spots[a + 1] * (-ints[a][k]).exp();
                let pj = s.spots[b + 1] * (-ints[b][k]).exp();
                o.price_pairs += 1;
                let gap = pi - pj;
                let rel = gap / pi.abs().max(pj.abs()).max(1e-300);
                o.worst_price = o.worst_price.max(rel);
                if gap > PRICE_TOL * pi.abs().max(pj.abs()) {
                    o.price_violations += 1;
                }
            }
        }
    }
}

impl PathObserver for ScanObserver {
    fn observe(&mut self, pre: &PathState, _info: &StepInfo, post: &PathState) -> Result<()> {
        if pre.step == 0 {
            scan_state(self, pre);
        }
        scan_state(self, post);
        Ok(())
    }
}

pub fn scan_paths(cfg: &SimConfig, spec: &ModelSpec) -> Result<ScanReport> {
    let obs = simulate_observed(cfg, spec, stream_noise(cfg, spec), |_| ScanObserver { ordered: true, ..Default::default() })?;
    let mut r = ScanReport { paths: obs.len(), worst_cone_gap: f64::NEG_INFINITY, worst_price_gap: f64::NEG_INFINITY, ..Default::default() };
    for o in &obs {
        r.states += o.states;
        r.price_pairs += o.price_pairs;
        r.cone_violations += o.cone_violations;
        r.price_violations += o.price_violations;
        r.worst_cone_gap = r.worst_cone_gap.max(o.worst_cone);
        r.worst_price_gap = r.worst_price_gap.max(o.worst_price);
        if o.ordered {
            r.ordered_paths += 1;
            if o.price_violations > 0 {
                r.implication_failures += 1;
            }
        }
    }
    Ok(r)
}
