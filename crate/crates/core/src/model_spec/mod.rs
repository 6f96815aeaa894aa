//! Declarative model specification.
//!
//! A [`ModelSpec`] collects every coefficient of the multi-curve model: spot
//! loadings `(a, b, c)`, forward-rate volatilities `β` and jump volatilities
//! `γ`, market prices of risk `(λ, ψ)`, the jump measure `F` and the short
//! rate. Index 0 is the riskless curve throughout.

mod functions;
mod validate;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

pub use functions::{CurveShape, Func1, Func2, MarkFn, TimeFn};
pub use validate::{
    check_order_condition, validate_spec, ConditionResult, OrderReport, OrderViolation,
    ValidationOptions, ValidationReport,
};

use crate::curve_space::{Curve, CurveFamily};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::quadrature::gauss_legendre;

/// Probability measure under which drifts are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    RealWorld,
    /// `λ ≡ 0`, `ψ ≡ 0`.
    RiskNeutral,
}

pub type BetaFn = Arc<dyn Fn(&CurveFamily) -> Vec<Vec<Curve>> + Send + Sync>;
pub type GammaFn = Arc<dyn Fn(&CurveFamily, f64) -> Vec<Curve> + Send + Sync>;

/// Forward-rate volatility `β^{i,j}`.
#[derive(Clone, Default)]
pub enum VolSpec {
    #[default]
    Zero,
    /// `β^i(ξ) = c_i e^{δ_i ξ}` with one Brownian factor.
    VasicekExp { c: Vec<f64>, delta: Vec<f64> },
    /// Returns curves indexed `[index][factor]` on the state's grid.
    StateDependent(BetaFn),
}

impl fmt::Debug for VolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VolSpec::Zero => write!(f, "Zero"),
            VolSpec::VasicekExp { c, delta } => write!(f, "VasicekExp(c={c:?}, delta={delta:?})"),
            VolSpec::StateDependent(_) => write!(f, "StateDependent(..)"),
        }
    }
}

/// Jump volatility `γ^i(h, x)`.
#[derive(Clone, Default)]
pub enum JumpVolSpec {
    #[default]
    Zero,
    /// `γ^i(x)(ξ) = x g_i e^{ε_i ξ}`.
    ExpMark { g: Vec<f64>, eps: Vec<f64> },
    /// Returns one curve per index for the given state and mark.
    StateDependent(GammaFn),
}

impl fmt::Debug for JumpVolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpVolSpec::Zero => write!(f, "Zero"),
            JumpVolSpec::ExpMark { g, eps } => write!(f, "ExpMark(g={g:?}, eps={eps:?})"),
            JumpVolSpec::StateDependent(_) => write!(f, "StateDependent(..)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MarkLaw {
    None,
    /// Atoms with masses `weights`; the intensity is their sum.
    Atoms { marks: Vec<f64>, weights: Vec<f64> },
    /// Total mass `intensity` spread on `[lo, hi]` with density proportional to `e^{-rate (x - lo)}`.
    TruncatedExp { intensity: f64, rate: f64, lo: f64, hi: f64 },
}

/// Finite jump measure `F` on the mark space, with its integration rule.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpMeasure {
    law: MarkLaw,
    rule: Vec<(f64, f64)>,
    cdf: Vec<f64>,
}

impl Default for JumpMeasure {
    fn default() -> Self {
        JumpMeasure::none()
    }
}

impl JumpMeasure {
    pub fn none() -> Self {
        JumpMeasure { law: MarkLaw::None, rule: Vec::new(), cdf: Vec::new() }
    }

    pub fn atoms(marks: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if marks.len() != weights.len() {
            return Err(Error::Specification("JumpMeasureSpec: marks and weights differ in length".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::Specification(format!(
                "JumpMeasureSpec: atom weights must be finite and nonnegative, got {w}"
            )));
        }
        if marks.iter().any(|x| !x.is_finite()) {
            return Err(Error::Specification("JumpMeasureSpec: non-finite mark".into()));
        }
        let rule: Vec<_> = marks.iter().copied().zip(weights.iter().copied()).collect();
        let cdf = cumulative(&rule);
        Ok(JumpMeasure { law: MarkLaw::Atoms { marks, weights }, rule, cdf })
    }

    pub fn truncated_exp(intensity: f64, rate: f64, lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(intensity >= 0.0 && intensity.is_finite()) {
            return Err(Error::Specification(format!(
                "JumpMeasureSpec: intensity must be finite and nonnegative, got {intensity}"
            )));
        }
        if !(lo < hi) || !rate.is_finite() || nodes == 0 {
            return Err(Error::Specification("JumpMeasureSpec: need lo < hi, finite rate, nodes >= 1".into()));
        }
        let z = truncated_exp_mass(rate, hi - lo);
        let rule: Vec<_> = gauss_legendre(nodes, lo, hi)
            .into_iter()
            .map(|(x, w)| (x, intensity * w * (-rate * (x - lo)).exp() / z))
            .collect();
        let cdf = cumulative(&rule);
        Ok(JumpMeasure { law: MarkLaw::TruncatedExp { intensity, rate, lo, hi }, rule, cdf })
    }

    pub fn law(&self) -> &MarkLaw {
        &self.law
    }

    pub fn intensity(&self) -> f64 {
        match &self.law {
            MarkLaw::None => 0.0,
            MarkLaw::Atoms { weights, .. } => weights.iter().sum(),
            MarkLaw::TruncatedExp { intensity, .. } => *intensity,
        }
    }

    pub fn is_none(&self) -> bool {
        self.intensity() == 0.0
    }

    /// `(x, F-mass)` pairs: atoms, or Gauss-Legendre nodes times the density.
    pub fn rule(&self) -> &[(f64, f64)] {
        &self.rule
    }

    /// `∫ f dF` under the integration rule.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.rule.iter().map(|(x, w)| w * f(*x)).sum()
    }

    /// Draws a mark from `F / intensity`.
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match &self.law {
            MarkLaw::None => 0.0,
            MarkLaw::Atoms { marks, .. } => {
                let k = self.cdf.partition_point(|c| *c <= u).min(marks.len() - 1);
                marks[k]
            }
            MarkLaw::TruncatedExp { rate, lo, hi, .. } => {
                let span = hi - lo;
                if rate.abs() < 1e-12 {
                    lo + u * span
                } else {
                    lo - (1.0 - u * (1.0 - (-rate * span).exp())).ln() / rate
                }
            }
        }
    }
}

fn truncated_exp_mass(rate: f64, span: f64) -> f64 {
    if rate.abs() < 1e-12 {
        span
    } else {
        (1.0 - (-rate * span).exp()) / rate
    }
}

fn cumulative(rule: &[(f64, f64)]) -> Vec<f64> {
    let total: f64 = rule.iter().map(|(_, w)| w).sum();
    let mut acc = 0.0;
    rule.iter()
        .map(|(_, w)| {
            acc += w;
            if total > 0.0 { acc / total } else { 0.0 }
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub enum SpotDrift {
    /// Drift from the short-end condition `a^i = r - η^i(0) - λ·b^i - ∫ c^i ψ dF`.
    #[default]
    Consistent,
    /// Prescribed per-index drifts; index 0 must be zero.
    Given(Vec<TimeFn>),
}

/// Coefficients of the spot stochastic logarithms `Z^i`.
#[derive(Debug, Clone)]
pub struct SpotCoeffs {
    pub drift: SpotDrift,
    /// `b[i][j]`, loading of index `i` on factor `j`.
    pub b: Vec<Vec<TimeFn>>,
    /// Jump loading `c^i(t, x)`.
    pub c: Vec<MarkFn>,
}

#[derive(Debug, Clone)]
pub struct MarketPriceSpec {
    pub lambda: Vec<TimeFn>,
    pub psi: MarkFn,
    pub lambda_bound: f64,
    pub kappa: MarkFn,
}

#[derive(Debug, Clone, Default)]
pub enum ShortRateSpec {
    /// `r_t = η⁰_t(0)`.
    #[default]
    FromCurve,
    Given(TimeFn),
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub m: usize,
    pub factors: usize,
    pub initial_curves: Vec<CurveShape>,
    pub initial_spots: Vec<f64>,
    pub vol: VolSpec,
    pub jump_vol: JumpVolSpec,
    pub jumps: JumpMeasure,
    pub spot: SpotCoeffs,
    pub market_price: MarketPriceSpec,
    pub short_rate: ShortRateSpec,
    pub mode: Mode,
    /// Constant added to every drift curve; zero for a consistent model.
    pub drift_perturbation: f64,
}

impl ModelSpec {
    /// A spec with `m` risky indices and `factors` Brownian factors, all
    /// coefficients zero, flat zero curves and unit spots.
    pub fn new(m: usize, factors: usize) -> Self {
        let n = m + 1;
        ModelSpec {
            m,
            factors,
            initial_curves: vec![CurveShape::Flat(0.0); n],
            initial_spots: vec![1.0; n],
            vol: VolSpec::Zero,
            jump_vol: JumpVolSpec::Zero,
            jumps: JumpMeasure::none(),
            spot: SpotCoeffs {
                drift: SpotDrift::Consistent,
                b: vec![vec![TimeFn::Constant(0.0); factors]; n],
                c: vec![MarkFn::Constant(0.0); n],
            },
            market_price: MarketPriceSpec {
                lambda: vec![TimeFn::Constant(0.0); factors],
                psi: MarkFn::Constant(0.0),
                lambda_bound: 0.0,
                kappa: MarkFn::Constant(0.0),
            },
            short_rate: ShortRateSpec::FromCurve,
            mode: Mode::RealWorld,
            drift_perturbation: 0.0,
        }
    }

    /// Checks dimensions and the index-0 conventions.
    pub fn check_structure(&self) -> Result<()> {
        let n = self.m + 1;
        let spec_err = |s: String| Err(Error::Specification(s));
        if self.factors == 0 {
            return spec_err("at least one Brownian factor is required".into());
        }
        if self.initial_curves.len() != n {
            return spec_err(format!("expected {n} initial curves, got {}", self.initial_curves.len()));
        }
        if self.initial_spots.len() != n {
            return spec_err(format!("expected {n} initial spots, got {}", self.initial_spots.len()));
        }
        if self.initial_spots[0] != 1.0 {
            return spec_err("the riskless spot S^0 is identically 1".into());
        }
        if let Some(s) = self.initial_spots.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return spec_err(format!("initial spots must be finite and nonnegative, got {s}"));
        }
        if self.spot.b.len() != n || self.spot.b.iter().any(|r| r.len() != self.factors) {
            return spec_err(format!("spot loadings b must be {n} x {}", self.factors));
        }
        if self.spot.c.len() != n {
            return spec_err(format!("spot jump loadings c must have {n} entries"));
        }
        if self.spot.b[0].iter().any(|f| !f.is_zero()) || !self.spot.c[0].is_zero() {
            return spec_err("index 0 spot loadings must be identically zero".into());
        }
        if let SpotDrift::Given(a) = &self.spot.drift {
            if a.len() != n {
                return spec_err(format!("spot drifts must have {n} entries"));
            }
            if !a[0].is_zero() {
                return spec_err("index 0 spot drift must be identically zero".into());
            }
        }
        if self.market_price.lambda.len() != self.factors {
            return spec_err(format!("lambda must have {} factors", self.factors));
        }
        if !(self.market_price.lambda_bound >= 0.0) {
            return spec_err("the bound Lambda must be nonnegative".into());
        }
        match &self.vol {
            VolSpec::Zero | VolSpec::StateDependent(_) => {}
            VolSpec::VasicekExp { c, delta } => {
                if self.factors != 1 {
                    return spec_err("VasicekExp volatility uses exactly one factor".into());
                }
                if c.len() != n || delta.len() != n {
                    return spec_err(format!("VasicekExp needs {n} scales and {n} decay rates"));
                }
                if c.iter().chain(delta).any(|v| !v.is_finite()) {
                    return spec_err("VasicekExp parameters must be finite".into());
                }
            }
        }
        if let JumpVolSpec::ExpMark { g, eps } = &self.jump_vol {
            if g.len() != n || eps.len() != n {
                return spec_err(format!("ExpMark needs {n} scales and {n} decay rates"));
            }
        }
        if !self.drift_perturbation.is_finite() {
            return spec_err("drift perturbation must be finite".into());
        }
        Ok(())
    }

    pub fn initial_family(&self, grid: &Grid) -> Result<CurveFamily> {
        self.check_structure()?;
        let curves = self
            .initial_curves
            .iter()
            .map(|s| s.materialize(grid))
            .collect::<Result<Vec<_>>>()?;
        CurveFamily::new(curves)
    }

    /// True when `β` and `γ` do not depend on the state.
    pub fn state_independent_vol(&self) -> bool {
        !matches!(self.vol, VolSpec::StateDependent(_))
            && !matches!(self.jump_vol, JumpVolSpec::StateDependent(_))
    }

    pub fn lambda(&self, t: f64, mode: Mode) -> Vec<f64> {
        match mode {
            Mode::RiskNeutral => vec![0.0; self.factors],
            Mode::RealWorld => self.market_price.lambda.iter().map(|f| f.eval(t)).collect(),
        }
    }

    pub fn psi(&self, t: f64, x: f64, mode: Mode) -> f64 {
        match mode {
            Mode::RiskNeutral => 0.0,
            Mode::RealWorld => self.market_price.psi.eval(t, x),
        }
    }

    pub fn b(&self, i: usize, t: f64) -> Vec<f64> {
        self.spot.b[i].iter().map(|f| f.eval(t)).collect()
    }

    /// `β^{i,j}(η)` for all indices and factors.
    pub fn beta(&self, family: &CurveFamily) -> Vec<Vec<Curve>> {
        let n = self.m + 1;
        match &self.vol {
            VolSpec::Zero => {
                let z = Curve::raw(0.0, vec![0.0; family.samples()], family.grid_step());
                vec![vec![z; self.factors]; n]
            }
            VolSpec::VasicekExp { c, delta } => {
                let g = grid_of(family);
                (0..n).map(|i| vec![Curve::exponential(c[i], delta[i], &g)]).collect()
            }
            VolSpec::StateDependent(f) => f(family),
        }
    }

    /// `γ^i(η, x)` for all indices, or `None` without jump volatility.
    pub fn gamma(&self, family: &CurveFamily, x: f64) -> Option<Vec<Curve>> {
        match &self.jump_vol {
            JumpVolSpec::Zero => None,
            JumpVolSpec::ExpMark { g, eps } => {
                let gr = grid_of(family);
                Some((0..=self.m).map(|i| Curve::exponential(x * g[i], eps[i], &gr)).collect())
            }
            JumpVolSpec::StateDependent(f) => Some(f(family, x)),
        }
    }
}

pub(crate) fn grid_of(family: &CurveFamily) -> Grid {
    Grid::from_counts(family.grid_step(), 0, family.samples()).expect("family grid is valid")
}
