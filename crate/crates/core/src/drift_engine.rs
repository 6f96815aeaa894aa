//! Real-world drift of the forward-curve family.
//!
//! For every index the drift curve is
//!
//! ```text
//! α^i = β^i·β̄^i − (λ + b^i)·β^i + ∫ γ^i (1 − e^{−γ̄^i}(1+ψ)(1+c^i)) dF
//! ```
//!
//! with `β̄ = Iβ` and `γ̄ = Iγ`. The spot drift follows from the short end,
//! and the integrated form of the drift condition is exposed as a residual.

use serde::Serialize;

pub use crate::model_spec::Mode;

use crate::curve_space::{Curve, CurveFamily};
use crate::error::{Error, Result};
use crate::model_spec::{ModelSpec, ShortRateSpec};

#[derive(Debug, Clone, Copy)]
pub struct DriftInputs<'a> {
    pub family: &'a CurveFamily,
    pub t: f64,
    pub spec: &'a ModelSpec,
    pub mode: Mode,
}

impl<'a> DriftInputs<'a> {
    pub fn new(family: &'a CurveFamily, t: f64, spec: &'a ModelSpec) -> Self {
        DriftInputs { family, t, spec, mode: spec.mode }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }
}

/// Everything a time step needs from the coefficients at one state.
#[derive(Debug, Clone)]
pub struct DriftTerms {
    pub alpha: CurveFamily,
    /// `β[i][j]`.
    pub beta: Vec<Vec<Curve>>,
    /// `∫ γ^i dF`, absent without jump volatility.
    pub compensator: Option<Vec<Curve>>,
}

pub fn drift_terms(inp: &DriftInputs) -> Result<DriftTerms> {
    let spec = inp.spec;
    let fam = inp.family;
    let t = inp.t;
    let n = spec.m + 1;
    let beta = spec.beta(fam);
    let lambda = spec.lambda(t, inp.mode);
    let mut alpha = Vec::with_capacity(n);
    for (i, row) in beta.iter().enumerate() {
        let b = spec.b(i, t);
        let mut a = Curve::raw(0.0, vec![0.0; fam.samples()], fam.grid_step());
        for (j, bij) in row.iter().enumerate() {
            if bij.h0() == 0.0 && bij.deriv().iter().all(|d| *d == 0.0) {
                continue;
            }
            let bar = bij.integral_op();
            a.add_scaled(&bij.product(&bar)?, 1.0)?;
            a.axpy(bij, -(lambda[j] + b[j]));
        }
        alpha.push(a);
    }

    let mut compensator = None;
    if !spec.jumps.is_none() && !matches!(spec.jump_vol, crate::model_spec::JumpVolSpec::Zero) {
        let mut comp: Vec<Curve> = (0..n).map(|_| Curve::raw(0.0, vec![0.0; fam.samples()], fam.grid_step())).collect();
        for &(x, w) in spec.jumps.rule() {
            let Some(gam) = spec.gamma(fam, x) else { break };
            let psi = spec.psi(t, x, inp.mode);
            for (i, g) in gam.iter().enumerate() {
                let k = (1.0 + psi) * (1.0 + spec.spot.c[i].eval(t, x));
                let e = g.integral_op().compose(|v| (-v).exp(), |v| -(-v).exp());
                let ge = g.product(&e)?;
                // w γ (1 − k e^{−γ̄})
                alpha[i].axpy(g, w);
                alpha[i].axpy(&ge, -w * k);
                comp[i].axpy(g, w);
            }
        }
        for (i, a) in alpha.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::Integrability(format!(
                    "jump part of the drift of index {i} is not finite at t={t}; check the integrability of ((1+c)e^(-γ̄)-1)(1+ψ)"
                )));
            }
        }
        compensator = Some(comp);
    }
    if spec.drift_perturbation != 0.0 {
        for a in &mut alpha {
            a.add_constant(spec.drift_perturbation);
        }
    }
    Ok(DriftTerms { alpha: CurveFamily::new(alpha)?, beta, compensator })
}

pub fn rw_drift(inp: &DriftInputs) -> Result<CurveFamily> {
    Ok(drift_terms(inp)?.alpha)
}

/// Short rate at time `t` for the given state.
pub fn short_rate(spec: &ModelSpec, t: f64, family: &CurveFamily) -> f64 {
    match &spec.short_rate {
        ShortRateSpec::FromCurve => family.get(0).h0(),
        ShortRateSpec::Given(r) => r.eval(t),
    }
}

/// `a^i = r − η^i(0) − λ·b^i − ∫ c^i ψ dF`; entry 0 is the consistency residual `r − η⁰(0)`.
pub fn short_end_drift(inp: &DriftInputs) -> Vec<f64> {
    let spec = inp.spec;
    let t = inp.t;
    let r = short_rate(spec, t, inp.family);
    let lambda = spec.lambda(t, inp.mode);
    (0..=spec.m)
        .map(|i| {
            let mut a = r - inp.family.get(i).h0();
            if i > 0 {
                let b = spec.b(i, t);
                a -= lambda.iter().zip(&b).map(|(l, b)| l * b).sum::<f64>();
                if inp.mode == Mode::RealWorld {
                    a -= spec.jumps.integrate(|x| spec.spot.c[i].eval(t, x) * spec.psi(t, x, inp.mode));
                }
            }
            a
        })
        .collect()
}

/// `ᾱ^i(t,T) − RHS^i(t,T)` of the integrated drift condition.
pub fn integrated_drift_residual(inp: &DriftInputs, maturity: f64) -> Result<Vec<f64>> {
    let spec = inp.spec;
    let t = inp.t;
    let tau = maturity - t;
    let horizon = inp.family.get(0).horizon();
    if !(tau >= 0.0) || tau > horizon {
        return Err(Error::Domain(format!("T - t = {tau} outside [0, {horizon}]")));
    }
    let terms = drift_terms(inp)?;
    let lambda = spec.lambda(t, inp.mode);
    let mut out = Vec::with_capacity(spec.m + 1);
    for i in 0..=spec.m {
        let lhs = terms.alpha.get(i).integral(tau)?;
        let b = spec.b(i, t);
        let mut rhs = 0.0;
        for (j, bij) in terms.beta[i].iter().enumerate() {
            let bar = bij.integral(tau)?;
            rhs += 0.5 * bar * bar - bar * (b[j] + lambda[j]);
        }
        if !spec.jumps.is_none() {
            for &(x, w) in spec.jumps.rule() {
                let gbar = match spec.gamma(inp.family, x) {
                    Some(g) => g[i].integral(tau)?,
                    None => 0.0,
                };
                let k = (1.0 + spec.psi(t, x, inp.mode)) * (1.0 + spec.spot.c[i].eval(t, x));
                rhs += w * (k * ((-gbar).exp() - 1.0) + gbar);
            }
        }
        out.push(lhs - rhs);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpIntegrability {
    pub index: usize,
    pub value: f64,
    pub active: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpIntegrabilityReport {
    pub pass: bool,
    pub per_index: Vec<JumpIntegrability>,
}

/// Integral of `((1+c)e^{−γ̄} − 1)(1+ψ)` over `{x : c > 2e^{γ̄} − 1}`.
pub fn jump_integrability_check(inp: &DriftInputs, maturity: f64) -> Result<JumpIntegrabilityReport> {
    let spec = inp.spec;
    let t = inp.t;
    let tau = maturity - t;
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("maturity {maturity} before t = {t}")));
    }
    let mut per_index = Vec::new();
    for i in 0..=spec.m {
        let mut value = 0.0;
        let mut active = 0;
        for &(x, w) in spec.jumps.rule() {
            let gbar = match spec.gamma(inp.family, x) {
                Some(g) => g[i].integral(tau)?,
                None => 0.0,
            };
            let c = spec.spot.c[i].eval(t, x);
            if c > 2.0 * gbar.exp() - 1.0 {
                active += 1;
                value += w * ((1.0 + c) * (-gbar).exp() - 1.0) * (1.0 + spec.psi(t, x, inp.mode));
            }
        }
        per_index.push(JumpIntegrability { index: i, value, active, pass: value.is_finite() });
    }
    Ok(JumpIntegrabilityReport { pass: per_index.iter().all(|r| r.pass), per_index })
}
