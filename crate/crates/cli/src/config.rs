//! Scenario files.
//!
//! A scenario is a TOML document. Unknown keys are rejected so that a
//! misspelt parameter can never be silently replaced by its default.

use std::fmt;
use std::path::PathBuf;

use hjm_core::model_spec::{CurveShape, JumpMeasure, JumpVolSpec, MarkFn, ShortRateSpec, SpotDrift, TimeFn, VolSpec};
use hjm_core::{Grid, Mode, ModelSpec, SpaceParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    VerifyDrift,
    CheckMonotonicity,
    RealizeAffine,
    Mmm,
    MartingaleTest,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Simulate,
        Command::VerifyDrift,
        Command::CheckMonotonicity,
        Command::RealizeAffine,
        Command::Mmm,
        Command::MartingaleTest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::VerifyDrift => "verify-drift",
            Command::CheckMonotonicity => "check-monotonicity",
            Command::RealizeAffine => "realize-affine",
            Command::Mmm => "mmm",
            Command::MartingaleTest => "martingale-test",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dt: f64,
    pub dxi: f64,
    pub horizon_t: f64,
    pub horizon_xi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurveConfig {
    Flat { value: f64 },
    Linear { level: f64, slope: f64 },
    Exponential { level: f64, scale: f64, rate: f64 },
    NelsonSiegel { b0: f64, b1: f64, b2: f64, tau: f64 },
}

impl CurveConfig {
    fn shape(&self) -> CurveShape {
        match *self {
            CurveConfig::Flat { value } => CurveShape::Flat(value),
            CurveConfig::Linear { level, slope } => CurveShape::Linear { level, slope },
            CurveConfig::Exponential { level, scale, rate } => CurveShape::Exponential { level, scale, rate },
            CurveConfig::NelsonSiegel { b0, b1, b2, tau } => CurveShape::NelsonSiegel { b0, b1, b2, tau },
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VolConfig {
    #[default]
    Zero,
    /// `c_i e^{δ_i ξ}`
    Vasicek { c: Vec<f64>, delta: Vec<f64> },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JumpVolConfig {
    #[default]
    Zero,
    /// `x g_i e^{ε_i ξ}`
    ExpMark { g: Vec<f64>, eps: Vec<f64> },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JumpsConfig {
    #[default]
    None,
    Atoms { marks: Vec<f64>, weights: Vec<f64> },
    TruncatedExp {
        intensity: f64,
        rate: f64,
        lo: f64,
        hi: f64,
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
}

fn default_nodes() -> usize {
    16
}

/// `intercept + slope x`, or its absolute value with `abs = true`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkConfig {
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub slope: f64,
    #[serde(default)]
    pub abs: bool,
}

impl MarkConfig {
    fn mark_fn(&self) -> MarkFn {
        match (self.abs, self.slope) {
            (false, 0.0) => MarkFn::Constant(self.intercept),
            (false, _) => MarkFn::Affine { intercept: self.intercept, slope: self.slope },
            (true, _) => MarkFn::AbsAffine { intercept: self.intercept, slope: self.slope },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    #[default]
    RealWorld,
    RiskNeutral,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "one")]
    pub m: usize,
    #[serde(default = "one")]
    pub factors: usize,
    #[serde(default)]
    pub mode: ModeConfig,
    /// One per index; missing curves are flat zero.
    #[serde(default)]
    pub curves: Vec<CurveConfig>,
    #[serde(default)]
    pub spots: Vec<f64>,
    #[serde(default)]
    pub vol: VolConfig,
    #[serde(default)]
    pub jump_vol: JumpVolConfig,
    #[serde(default)]
    pub jumps: JumpsConfig,
    /// `b[i][j]`; missing entries are zero.
    #[serde(default)]
    pub spot_b: Vec<Vec<f64>>,
    #[serde(default)]
    pub spot_c: Vec<MarkConfig>,
    /// Constant spot drifts; the consistent drift is used when absent.
    #[serde(default)]
    pub spot_drift: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub psi: MarkConfig,
    #[serde(default)]
    pub lambda_bound: f64,
    #[serde(default)]
    pub kappa: MarkConfig,
    /// Constant short rate; the riskless short end is used when absent.
    #[serde(default)]
    pub short_rate: Option<f64>,
    #[serde(default)]
    pub drift_perturbation: f64,
}

fn len_check(errs: &mut Vec<(String, String)>, key: &str, len: usize, want: usize) -> bool {
    if len != want {
        errs.push((format!("model.{key}"), format!("expected {want} entries, found {len}")));
        false
    } else {
        true
    }
}

fn one() -> usize {
    1
}

impl Default for ModelConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodConfig {
    #[default]
    Auto,
    Generic,
    Additive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub maturities: Vec<f64>,
    #[serde(default = "ten")]
    pub record_every: usize,
    #[serde(default)]
    pub export_curves: bool,
    #[serde(default = "ten")]
    pub curve_stride: usize,
    /// Paths written to the per-path tables.
    #[serde(default = "ten")]
    pub export_paths: usize,
    #[serde(default)]
    pub method: MethodConfig,
}

fn ten() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyDriftConfig {
    #[serde(default = "twenty")]
    pub n_times: usize,
    #[serde(default = "twenty")]
    pub n_maturities: usize,
    #[serde(default = "tol_drift")]
    pub tol: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_rho_prime")]
    pub rho_prime: f64,
    #[serde(default = "eight")]
    pub samples: usize,
    #[serde(default)]
    pub beta_growth_bound: Option<f64>,
}

fn twenty() -> usize {
    20
}
fn eight() -> usize {
    8
}
fn tol_drift() -> f64 {
    1e-6
}
fn default_rho() -> f64 {
    0.5
}
fn default_rho_prime() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonicityConfig {
    #[serde(default = "two_hundred")]
    pub samples: usize,
    #[serde(default)]
    pub maturities: Vec<f64>,
}

fn two_hundred() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineConfig {
    #[serde(default = "tol_affine")]
    pub tol: f64,
    /// Paths for the gap test; the scenario's `n_paths` when absent.
    #[serde(default)]
    pub paths: Option<usize>,
}

fn tol_affine() -> f64 {
    5e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmmConfig {
    #[serde(default = "alpha0")]
    pub alpha0: f64,
    #[serde(default = "eta")]
    pub eta: f64,
    #[serde(default)]
    pub r: f64,
    /// Spot drifts per index, index 0 zero; zeros when empty.
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default = "one_f")]
    pub x0: f64,
    #[serde(default)]
    pub spots: Vec<f64>,
    #[serde(default)]
    pub t: f64,
    #[serde(default = "one_f")]
    pub maturity: f64,
    /// Maturities of the deflated-price test.
    #[serde(default = "unit_maturity")]
    pub maturities: Vec<f64>,
}

fn alpha0() -> f64 {
    0.04
}
fn eta() -> f64 {
    0.1
}
fn one_f() -> f64 {
    1.0
}
fn unit_maturity() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleConfig {
    #[serde(default = "unit_maturity")]
    pub maturities: Vec<f64>,
    /// Test times; the time horizon when empty.
    #[serde(default)]
    pub times: Vec<f64>,
    /// Indices tested; all when empty.
    #[serde(default)]
    pub indices: Vec<usize>,
}

macro_rules! empty_default {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                toml::from_str("").expect("defaults")
            }
        }
    )*};
}

empty_default!(SimulateConfig, VerifyDriftConfig, MonotonicityConfig, AffineConfig, MmmConfig, MartingaleConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub commands: Vec<Command>,
    pub grid: GridConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default, rename = "verify-drift")]
    pub verify_drift: VerifyDriftConfig,
    #[serde(default)]
    pub monotonicity: MonotonicityConfig,
    #[serde(default)]
    pub affine: AffineConfig,
    #[serde(default)]
    pub mmm: MmmConfig,
    #[serde(default)]
    pub martingale: MartingaleConfig,
}

fn default_paths() -> usize {
    10_000
}
fn default_seed() -> u64 {
    42
}
fn default_out() -> PathBuf {
    PathBuf::from("hjm-out")
}

/// One problem in a scenario file.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Issue {
    pub line: Option<usize>,
    pub key: String,
    pub reason: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.reason),
            None => write!(f, "{}: {}", self.key, self.reason),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigError {
    pub issues: Vec<Issue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid scenario")?;
        for i in &self.issues {
            write!(f, "\n  {i}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// Line (1-based) of `key` under its table, found by a plain scan.
fn locate(text: &str, key: &str) -> Option<usize> {
    let own = format!("[{key}]");
    if let Some(n) = text.lines().position(|l| l.trim() == own) {
        return Some(n + 1);
    }
    let (table, leaf) = match key.rsplit_once('.') {
        Some((t, l)) => (Some(t), l),
        None => (None, key),
    };
    let mut current: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = Some(line.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            continue;
        }
        let in_table = match (table, &current) {
            (None, None) => true,
            (Some(t), Some(c)) => t == c,
            _ => false,
        };
        if in_table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == leaf {
                    return Some(n + 1);
                }
            }
        }
    }
    let header = table.map(|t| format!("[{t}]"))?;
    text.lines().position(|l| l.trim() == header).map(|n| n + 1)
}

impl ScenarioConfig {
    pub fn grid(&self) -> Result<Grid, hjm_core::Error> {
        Grid::new(self.grid.dt, self.grid.horizon_t, self.grid.horizon_xi)
    }

    pub fn space(&self) -> Result<SpaceParams, hjm_core::Error> {
        SpaceParams::new(self.verify_drift.rho, self.verify_drift.rho_prime)
    }

    /// The model described by the `[model]` table.
    pub fn model_spec(&self) -> Result<ModelSpec, Vec<(String, String)>> {
        let mc = &self.model;
        let m = mc.m;
        let n = m + 1;
        let d = mc.factors;
        let mut errs: Vec<(String, String)> = Vec::new();
        let mut spec = ModelSpec::new(m, d);
        spec.mode = match mc.mode {
            ModeConfig::RealWorld => Mode::RealWorld,
            ModeConfig::RiskNeutral => Mode::RiskNeutral,
        };
        if !mc.curves.is_empty() && len_check(&mut errs, "curves", mc.curves.len(), n) {
            spec.initial_curves = mc.curves.iter().map(CurveConfig::shape).collect();
        }
        if !mc.spots.is_empty() && len_check(&mut errs, "spots", mc.spots.len(), n) {
            spec.initial_spots = mc.spots.clone();
        }
        match &mc.vol {
            VolConfig::Zero => {}
            VolConfig::Vasicek { c, delta } => {
                if d != 1 {
                    errs.push(("model.vol".into(), "the vasicek volatility drives exactly one factor".into()));
                }
                if len_check(&mut errs, "vol.c", c.len(), n) & len_check(&mut errs, "vol.delta", delta.len(), n) {
                    spec.vol = VolSpec::VasicekExp { c: c.clone(), delta: delta.clone() };
                }
            }
        }
        if let JumpVolConfig::ExpMark { g, eps } = &mc.jump_vol {
            if len_check(&mut errs, "jump_vol.g", g.len(), n) & len_check(&mut errs, "jump_vol.eps", eps.len(), n) {
                spec.jump_vol = JumpVolSpec::ExpMark { g: g.clone(), eps: eps.clone() };
            }
        }
        let jumps = match &mc.jumps {
            JumpsConfig::None => Ok(JumpMeasure::none()),
            JumpsConfig::Atoms { marks, weights } => JumpMeasure::atoms(marks.clone(), weights.clone()),
            JumpsConfig::TruncatedExp { intensity, rate, lo, hi, nodes } => {
                JumpMeasure::truncated_exp(*intensity, *rate, *lo, *hi, *nodes)
            }
        };
        match jumps {
            Ok(j) => spec.jumps = j,
            Err(e) => errs.push(("model.jumps".into(), e.to_string())),
        }
        for (i, row) in mc.spot_b.iter().enumerate() {
            if i >= n || row.len() > d {
                errs.push(("model.spot_b".into(), format!("expected at most {n} rows of at most {d} loadings")));
                break;
            }
            for (j, v) in row.iter().enumerate() {
                spec.spot.b[i][j] = TimeFn::Constant(*v);
            }
        }
        if !mc.spot_c.is_empty() && len_check(&mut errs, "spot_c", mc.spot_c.len(), n) {
            spec.spot.c = mc.spot_c.iter().map(MarkConfig::mark_fn).collect();
        }
        if let Some(a) = &mc.spot_drift {
            if len_check(&mut errs, "spot_drift", a.len(), n) {
                spec.spot.drift = SpotDrift::Given(a.iter().map(|v| TimeFn::Constant(*v)).collect());
            }
        }
        if !mc.lambda.is_empty() && len_check(&mut errs, "lambda", mc.lambda.len(), d) {
            spec.market_price.lambda = mc.lambda.iter().map(|v| TimeFn::Constant(*v)).collect();
        }
        spec.market_price.psi = mc.psi.mark_fn();
        spec.market_price.kappa = mc.kappa.mark_fn();
        spec.market_price.lambda_bound = mc.lambda_bound;
        if let Some(r) = mc.short_rate {
            spec.short_rate = ShortRateSpec::Given(TimeFn::Constant(r));
        }
        spec.drift_perturbation = mc.drift_perturbation;
        if errs.is_empty() {
            if let Err(e) = spec.check_structure() {
                errs.push(("model".into(), e.to_string()));
            }
        }
        if errs.is_empty() {
            Ok(spec)
        } else {
            Err(errs)
        }
    }

    /// Semantic checks beyond the document structure.
    fn validate(&self) -> Vec<(String, String)> {
        let mut errs = Vec::new();
        let g = &self.grid;
        if g.dt != g.dxi {
            errs.push((
                "grid.dxi".to_string(),
                format!("grid contract violated: dt = {} must equal dxi = {}", g.dt, g.dxi),
            ));
        } else if let Err(e) = self.grid() {
            errs.push(("grid".into(), format!("grid contract violated: {e}")));
        }
        if self.n_paths == 0 {
            errs.push(("n_paths".into(), "at least one path is required".into()));
        }
        let limit = g.horizon_xi - g.dt;
        let mut check_mats = |key: &str, mats: &[f64]| {
            for &t in mats {
                if !(t >= 0.0) || t > limit + 1e-12 {
                    errs.push((key.to_string(), format!("maturity {t} beyond the maturity horizon {}", g.horizon_xi)));
                }
            }
        };
        check_mats("simulate.maturities", &self.simulate.maturities);
        check_mats("monotonicity.maturities", &self.monotonicity.maturities);
        check_mats("martingale.maturities", &self.martingale.maturities);
        check_mats("mmm.maturities", &self.mmm.maturities);
        for &t in &self.martingale.times {
            if !(t >= 0.0) || t > g.horizon_t + 1e-12 {
                errs.push(("martingale.times".into(), format!("time {t} outside [0, {}]", g.horizon_t)));
            }
        }
        if let Err(e) = self.space() {
            errs.push(("verify-drift.rho".into(), e.to_string()));
        }
        if let Err(mut e) = self.model_spec() {
            errs.append(&mut e);
        }
        errs
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigError { issues: vec![Issue { line, key: String::new(), reason: e.message().to_string() }] }
    })?;
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError {
            issues: errs.into_iter().map(|(key, reason)| Issue { line: locate(text, &key), key, reason }).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
commands = ["simulate"]

[grid]
dt = 0.01
dxi = 0.01
horizon_t = 1.0
horizon_xi = 3.0
"#;

    #[test]
    fn defaults_are_filled() {
        let c = parse_scenario(MINIMAL).unwrap();
        assert_eq!(c.n_paths, 10_000);
        assert_eq!(c.seed, 42);
        assert_eq!(c.commands, vec![Command::Simulate]);
        assert_eq!(c.model.m, 1);
    }

    #[test]
    fn grid_contract_is_enforced() {
        let e = parse_scenario(&MINIMAL.replace("dxi = 0.01", "dxi = 0.02")).unwrap_err();
        assert!(e.issues[0].reason.contains("grid contract violated"));
        assert_eq!(e.issues[0].line, Some(6));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let e = parse_scenario(&MINIMAL.replace("horizon_t = 1.0", "horizon_t = 1.0\nhorizn = 2")).unwrap_err();
        assert!(e.issues[0].reason.contains("unknown field"), "{e}");
        assert_eq!(e.issues[0].line, Some(8));
    }

    #[test]
    fn negative_intensity_names_the_invariant() {
        let text = format!("{MINIMAL}\n[model.jumps]\nkind = \"truncated-exp\"\nintensity = -1.0\nrate = 1.0\nlo = 0.0\nhi = 1.0\n");
        let e = parse_scenario(&text).unwrap_err();
        assert!(e.issues.iter().any(|i| i.reason.contains("JumpMeasureSpec") && i.key == "model.jumps"), "{e}");
    }
}
