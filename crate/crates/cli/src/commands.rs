//! One function per subcommand. Each returns a verdict, a JSON payload and
//! CSV tables; writing them out is left to [`crate::report`].

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use hjm_core::affine::{realization_gap, short_end_moments, AffineSpec};
use hjm_core::deflator::{deflated_series, martingale_zscore, Moments, ZScore};
use hjm_core::drift_engine::{integrated_drift_residual, jump_integrability_check, DriftInputs};
use hjm_core::invariance::{check_cone_coeff_conditions, preconditions, price_ordering, scan_paths};
use hjm_core::mmm::{
    bond0_mmm, forward_family_mmm, mmm_ensemble, mprc, mprc_gap, mprc_mc, MmmParams,
};
use hjm_core::model_spec::{check_order_condition, validate_spec, JumpVolSpec, TimeFn, ValidationOptions, VolSpec};
use hjm_core::spde_solver::{simulate, Method, SimConfig};
use hjm_core::ModelSpec;
use log::info;
use serde_json::{json, Value};

use crate::config::{Command, MethodConfig, ScenarioConfig};

/// A CSV file produced by a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub content: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: Command,
    pub pass: bool,
    pub report: Value,
    pub tables: Vec<Table>,
}

fn table(name: &str, header: &str) -> Table {
    Table { name: name.into(), content: format!("{header}\n") }
}

macro_rules! row {
    ($t:expr, $($arg:tt)*) => {
        writeln!($t.content, $($arg)*).expect("writing to a string")
    };
}

pub fn run_command(cmd: Command, cfg: &ScenarioConfig) -> Result<Outcome> {
    info!("running {}", cmd.name());
    let spec = cfg.model_spec().map_err(|e| {
        anyhow::anyhow!(e.into_iter().map(|(k, r)| format!("{k}: {r}")).collect::<Vec<_>>().join("; "))
    })?;
    match cmd {
        Command::Simulate => simulate_cmd(cfg, &spec),
        Command::VerifyDrift => verify_drift(cfg, &spec),
        Command::CheckMonotonicity => check_monotonicity(cfg, &spec),
        Command::RealizeAffine => realize_affine(cfg, &spec),
        Command::Mmm => mmm_cmd(cfg),
        Command::MartingaleTest => martingale_test(cfg, &spec),
    }
}

fn sim_config(cfg: &ScenarioConfig) -> Result<SimConfig> {
    Ok(SimConfig::new(cfg.grid()?, cfg.n_paths, cfg.seed))
}

fn simulate_cmd(cfg: &ScenarioConfig, spec: &ModelSpec) -> Result<Outcome> {
    let sc = &cfg.simulate;
    let mut sim = sim_config(cfg)?;
    sim.maturities = sc.maturities.clone();
    sim.record_every = sc.record_every;
    sim.keep_curves = sc.export_curves;
    sim.method = match sc.method {
        MethodConfig::Auto => Method::Auto,
        MethodConfig::Generic => Method::Generic,
        MethodConfig::Additive => Method::Additive,
    };
    let ens = simulate(&sim, spec)?;
    let n = spec.m + 1;
    let mut paths = table("paths", "path,t,index,spot,short_end,numeraire,deflator");
    let mut bonds = table("bonds", "path,t,index,maturity,bond");
    for (p, rec) in ens.paths.iter().take(sc.export_paths).enumerate() {
        for s in &rec.snapshots {
            for i in 0..n {
                row!(paths, "{p},{},{i},{},{},{},{}", s.t, s.spots[i], s.short_ends[i], s.numeraire, s.deflator);
                for (k, m) in ens.maturities.iter().enumerate() {
                    row!(bonds, "{p},{},{i},{m},{}", s.t, s.bonds[i][k]);
                }
            }
        }
    }
    let mut summary = table("summary", "t,index,mean_short_end,se_short_end,mean_deflated_spot");
    let mut stats = Vec::new();
    for (r, &t) in ens.times().iter().enumerate() {
        for i in 0..n {
            let short = Moments::of(&ens.paths.iter().map(|p| p.snapshots[r].short_ends[i]).collect::<Vec<_>>());
            let spot = Moments::of(
                &ens.paths
                    .iter()
                    .map(|p| {
                        let s = &p.snapshots[r];
                        s.deflator * s.spots[i] / s.numeraire
                    })
                    .collect::<Vec<_>>(),
            );
            row!(summary, "{t},{i},{},{},{}", short.mean, short.se(), spot.mean);
            stats.push(json!({"t": t, "index": i, "mean_short_end": short.mean, "se_short_end": short.se(), "mean_deflated_spot": spot.mean}));
        }
    }
    let mut tables = vec![summary, paths, bonds];
    if sc.export_curves {
        let mut curves = table("curves", "path,t,index,xi,value");
        let dx = ens.grid.step();
        for (p, rec) in ens.paths.iter().take(sc.export_paths).enumerate() {
            for s in &rec.snapshots {
                let Some(f) = &s.family else { continue };
                for (i, c) in f.curves().iter().enumerate() {
                    let v = c.node_values();
                    for k in (0..v.len()).step_by(sc.curve_stride.max(1)) {
                        row!(curves, "{p},{},{i},{},{}", s.t, dx * k as f64, v[k]);
                    }
                }
            }
        }
        tables.push(curves);
    }
    Ok(Outcome {
        command: Command::Simulate,
        pass: true,
        report: json!({
            "paths": ens.n_paths(),
            "record_steps": ens.record_steps.len(),
            "maturities": ens.maturities,
            "summary": stats,
        }),
        tables,
    })
}

fn verify_drift(cfg: &ScenarioConfig, spec: &ModelSpec) -> Result<Outcome> {
    let vc = &cfg.verify_drift;
    let grid = cfg.grid()?;
    let opts = ValidationOptions {
        seed: cfg.seed,
        samples: vc.samples,
        beta_growth_bound: vc.beta_growth_bound,
        ..ValidationOptions::default()
    };
    let validation = validate_spec(spec, cfg.space()?, &grid, &opts)?;
    let order = check_order_condition(spec, &grid);
    let fam = spec.initial_family(&grid)?;
    let span = grid.horizon_xi() - grid.step();
    let mut residuals = table("residuals", "t,maturity,index,residual");
    let mut worst: f64 = 0.0;
    let mut worst_at = json!(null);
    let mut integrability = Vec::new();
    for a in 0..vc.n_times {
        let t = grid.horizon_t() * a as f64 / vc.n_times.max(1) as f64;
        let inp = DriftInputs::new(&fam, t, spec);
        for b in 1..=vc.n_maturities {
            let big_t = t + span * b as f64 / vc.n_maturities as f64;
            for (i, r) in integrated_drift_residual(&inp, big_t)?.iter().enumerate() {
                row!(residuals, "{t},{big_t},{i},{r}");
                if r.abs() > worst || r.is_nan() {
                    worst = if r.is_nan() { f64::INFINITY } else { r.abs() };
                    worst_at = json!({"t": t, "maturity": big_t, "index": i});
                }
            }
        }
        integrability.push(jump_integrability_check(&inp, t + span)?);
    }
    let integrable = integrability.iter().all(|r| r.pass);
    let pass = worst < vc.tol && validation.pass() && integrable;
    Ok(Outcome {
        command: Command::VerifyDrift,
        pass,
        report: json!({
            "max_residual": worst,
            "worst": worst_at,
            "tolerance": vc.tol,
            "validation": validation,
            "order_condition": order,
            "jump_integrability_pass": integrable,
        }),
        tables: vec![residuals],
    })
}

fn check_monotonicity(cfg: &ScenarioConfig, spec: &ModelSpec) -> Result<Outcome> {
    let mc = &cfg.monotonicity;
    let grid = cfg.grid()?;
    let coeff = check_cone_coeff_conditions(spec, &grid, mc.samples, cfg.seed)?;
    let pre = preconditions(spec, &grid)?;
    let order = check_order_condition(spec, &grid);
    let mut sim = sim_config(cfg)?;
    sim.method = Method::Generic;
    let scan = scan_paths(&sim, spec)?;
    let recorded = if mc.maturities.is_empty() {
        None
    } else {
        sim.maturities = mc.maturities.clone();
        sim.method = Method::Auto;
        sim.record_every = 1;
        Some(price_ordering(&simulate(&sim, spec)?))
    };
    let mut conditions = table("conditions", "condition,pass,checked");
    for c in &coeff.conditions {
        row!(conditions, "{},{},{}", c.name, c.pass, c.checked);
    }
    let pass = coeff.pass
        && scan.cone_violations == 0
        && scan.price_violations == 0
        && recorded.as_ref().is_none_or(|r| r.violations == 0);
    Ok(Outcome {
        command: Command::CheckMonotonicity,
        pass,
        report: json!({
            "coefficients": coeff,
            "preconditions": pre,
            "order_condition": order,
            "scan": scan,
            "recorded_prices": recorded,
        }),
        tables: vec![conditions],
    })
}

fn affine_spec(spec: &ModelSpec, cfg: &ScenarioConfig) -> Result<AffineSpec> {
    let VolSpec::VasicekExp { c, delta } = &spec.vol else {
        bail!("realize-affine needs the vasicek volatility");
    };
    if !spec.jumps.is_none() || !matches!(spec.jump_vol, JumpVolSpec::Zero) {
        bail!("realize-affine covers the Brownian model only");
    }
    let mut a = AffineSpec::new(c.clone(), delta.clone(), spec.initial_family(&cfg.grid()?)?)?;
    if spec.mode == hjm_core::Mode::RealWorld {
        a.lambda = spec.market_price.lambda[0].clone();
    }
    a.b = spec.spot.b.iter().map(|row| row[0].clone()).collect();
    Ok(a)
}

fn realize_affine(cfg: &ScenarioConfig, spec: &ModelSpec) -> Result<Outcome> {
    let a = affine_spec(spec, cfg)?;
    let mut sim = sim_config(cfg)?;
    sim.n_paths = cfg.affine.paths.unwrap_or(cfg.n_paths);
    let gap = realization_gap(&sim, &a)?;
    let grid = sim.grid;
    let mut moments = table("moments", "t,index,mean,variance");
    let steps = 10;
    for k in 0..=steps {
        let t = grid.horizon_t() * k as f64 / steps as f64;
        for i in 0..=a.m() {
            let (m, v) = short_end_moments(&a, i, t)?;
            row!(moments, "{t},{i},{m},{v}");
        }
    }
    Ok(Outcome {
        command: Command::RealizeAffine,
        pass: gap.max_gap <= cfg.affine.tol,
        report: json!({"gap": gap, "tolerance": cfg.affine.tol}),
        tables: vec![moments],
    })
}

fn mmm_params(cfg: &ScenarioConfig) -> Result<(MmmParams, Vec<f64>)> {
    let mc = &cfg.mmm;
    let m = if mc.a.is_empty() { cfg.model.m } else { mc.a.len() - 1 };
    let mut p = MmmParams::new(mc.alpha0, mc.eta, m)?;
    p.r = TimeFn::Constant(mc.r);
    p.x0 = mc.x0;
    if !mc.a.is_empty() {
        p.a = mc.a.iter().map(|v| TimeFn::Constant(*v)).collect();
    }
    p.check()?;
    let spots = if mc.spots.is_empty() { vec![1.0; m + 1] } else { mc.spots.clone() };
    if spots.len() != m + 1 {
        bail!("mmm.spots: expected {} entries, found {}", m + 1, spots.len());
    }
    Ok((p, spots))
}

fn mmm_cmd(cfg: &ScenarioConfig) -> Result<Outcome> {
    let mc = &cfg.mmm;
    let (p, spots) = mmm_params(cfg)?;
    let grid = cfg.grid()?;
    let dt = grid.step();
    let est = mprc_mc(&p, mc.t, mc.maturity, dt, cfg.n_paths, cfg.seed)?;
    let m_val = mprc(&p, mc.t, mc.maturity, p.x0)?;
    let gap = mprc_gap(&p, mc.t, mc.maturity, p.x0)?;
    let z = if est.se > 0.0 { (est.mean - m_val) / est.se } else { 0.0 };
    let fam = forward_family_mmm(&p, 0.0, p.x0, &grid)?;
    let mut forward = table("forward", "index,xi,value");
    let mut bonds = table("bonds", "maturity,bond0,contribution,bond0_from_curve");
    let vals: Vec<Vec<f64>> = fam.curves().iter().map(|c| c.node_values()).collect();
    let stride = (grid.n_xi() / 200).max(1);
    for (i, v) in vals.iter().enumerate() {
        for k in (0..v.len()).step_by(stride) {
            row!(forward, "{i},{},{}", k as f64 * dt, v[k]);
        }
    }
    let ints = fam.get(0).integral_nodes();
    let mut int_err: f64 = 0.0;
    for k in (stride..grid.n_xi()).step_by(stride) {
        let big_t = k as f64 * dt;
        let b0 = bond0_mmm(&p, 0.0, big_t, p.x0)?;
        let from_curve = (-ints[k]).exp();
        int_err = int_err.max((b0 - from_curve).abs());
        row!(bonds, "{big_t},{b0},{},{from_curve}", mprc(&p, 0.0, big_t, p.x0)?);
    }
    let mut sim = sim_config(cfg)?;
    sim.maturities = mc.maturities.clone();
    let ens = mmm_ensemble(&p, &spots, &sim)?;
    let indices: Vec<usize> = (0..=p.m()).collect();
    let series = deflated_series(&ens, &mc.maturities, &indices)?;
    let zs = martingale_zscore(&series, grid.horizon_t())?;
    let ordering = price_ordering(&ens);
    let ordered_inputs = (1..p.m()).all(|i| {
        p.a[i].eval(0.0) <= p.a[i + 1].eval(0.0) && spots[i] <= spots[i + 1]
    });
    let pass = z.abs() <= 3.0
        && gap > 0.0
        && int_err <= 1e-6
        && zs.iter().all(|z| z.pass)
        && (!ordered_inputs || ordering.violations == 0);
    let mut zt = table("zscores", "index,maturity,t,initial,mean,se,z,pass");
    zscore_rows(&mut zt, &zs);
    Ok(Outcome {
        command: Command::Mmm,
        pass,
        report: json!({
            "contribution": {"t": mc.t, "maturity": mc.maturity, "closed_form": m_val, "one_minus_closed_form": gap,
                "mc": est, "z": z},
            "bond_from_curve_max_error": int_err,
            "deflated_prices": zs,
            "ordered_inputs": ordered_inputs,
            "price_ordering": ordering,
        }),
        tables: vec![forward, bonds, zt],
    })
}

fn zscore_rows(t: &mut Table, zs: &[ZScore]) {
    for z in zs {
        row!(t, "{},{},{},{},{},{},{},{}", z.index, z.maturity, z.t, z.initial, z.mean, z.se, z.z, z.pass);
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn martingale_test(cfg: &ScenarioConfig, spec: &ModelSpec) -> Result<Outcome> {
    let mc = &cfg.martingale;
    let mut sim = sim_config(cfg)?;
    let grid = sim.grid;
    let times = if mc.times.is_empty() { vec![grid.horizon_t()] } else { mc.times.clone() };
    let steps = times
        .iter()
        .map(|&t| grid.index_of(t).with_context(|| format!("test time {t} is off the grid")))
        .collect::<Result<Vec<_>>>()?;
    let every = steps.iter().fold(grid.n_t(), |g, &s| gcd(g, s));
    sim.record_every = if every == grid.n_t() { 0 } else { every };
    sim.maturities = mc.maturities.clone();
    let ens = simulate(&sim, spec)?;
    let indices: Vec<usize> = if mc.indices.is_empty() { (0..=spec.m).collect() } else { mc.indices.clone() };
    let series = deflated_series(&ens, &mc.maturities, &indices)?;
    let mut all = Vec::new();
    for &t in &times {
        all.extend(martingale_zscore(&series, t)?);
    }
    let failing: Vec<Value> = all
        .iter()
        .filter(|z| !z.pass)
        .map(|z| json!({"index": z.index, "maturity": z.maturity, "t": z.t, "z": z.z}))
        .collect();
    let mut zt = table("zscores", "index,maturity,t,initial,mean,se,z,pass");
    zscore_rows(&mut zt, &all);
    Ok(Outcome {
        command: Command::MartingaleTest,
        pass: failing.is_empty(),
        report: json!({"zscores": all, "failing": failing}),
        tables: vec![zt],
    })
}
