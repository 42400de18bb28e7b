//! Experiment spec files and their validation.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use transinfo::simulate::{InitialLaw, Observable};
use transinfo::RateFunction;

use crate::models::{self, Model, ModelRef};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("model validation error: {0}")]
    ModelValidation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigParse(_) => 2,
            CliError::ModelValidation(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    VerifyTci,
    BestConstant,
    CkpScan,
    RhoScan,
    Diffusion,
    Lyapunov,
    Simulate,
    Tensorize,
    PaperSuite,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::VerifyTci => "verify-tci",
            Kind::BestConstant => "best-constant",
            Kind::CkpScan => "ckp-scan",
            Kind::RhoScan => "rho-scan",
            Kind::Diffusion => "diffusion",
            Kind::Lyapunov => "lyapunov",
            Kind::Simulate => "simulate",
            Kind::Tensorize => "tensorize",
            Kind::PaperSuite => "paper-suite",
        }
    }

    fn needs_model(&self) -> bool {
        !matches!(self, Kind::CkpScan | Kind::RhoScan | Kind::PaperSuite)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: Kind,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub model: Option<ModelRef>,
    #[serde(default)]
    pub params: Option<Value>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Members of a paper-suite; empty means the bundled suite.
    #[serde(default)]
    pub experiments: Vec<ExperimentSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MetricSpec {
    Named(String),
    Matrix { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    #[default]
    W1,
    W2,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyTciParams {
    #[serde(default)]
    pub metric: Option<MetricSpec>,
    #[serde(default)]
    pub cost: CostKind,
    /// Rate function; defaults to the quadratic with the best constant.
    #[serde(default)]
    pub alpha: Option<RateFunction>,
    #[serde(default = "d_1000")]
    pub n_densities: usize,
    #[serde(default = "d_1e9")]
    pub tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BestConstantParams {
    #[serde(default)]
    pub metric: Option<MetricSpec>,
    #[serde(default = "d_true")]
    pub w2: bool,
    /// Random densities for the log-Sobolev ratio scan; 0 skips it.
    #[serde(default)]
    pub lsi_samples: usize,
    #[serde(default)]
    pub expect_c_p: Option<f64>,
    #[serde(default = "d_1e10")]
    pub tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CkpScanParams {
    #[serde(default = "d_10000")]
    pub n_samples: usize,
    #[serde(default = "d_6")]
    pub max_states: usize,
    #[serde(default = "d_p_values")]
    pub extremal_p: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhoScanParams {
    #[serde(default = "d_lambdas")]
    pub lambdas: Vec<f64>,
    /// Uniform points on (0.005, 0.995).
    #[serde(default = "d_199")]
    pub p_points: usize,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum RhoKind {
    Identity,
    TanhWarp,
    Intrinsic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionParams {
    #[serde(default = "d_rhos")]
    pub rhos: Vec<RhoKind>,
    #[serde(default = "d_half")]
    pub tanh_eps: f64,
    /// Right cutoff of the non-explosion test; skipped when absent.
    #[serde(default)]
    pub cutoff: Option<f64>,
    /// Allowed relative excess of the discrete c_P over C(rho).
    #[serde(default = "d_002")]
    pub c_p_margin: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovParams {
    #[serde(default = "d_1000")]
    pub n_densities: usize,
    /// Exponent of `U(n) = exp(c n)` for the queue model.
    #[serde(default)]
    pub c: Option<f64>,
    /// Explicit `U`, `phi`, `b` for plain chain models.
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    #[serde(default)]
    pub phi: Option<Vec<f64>>,
    #[serde(default)]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundSpec {
    /// `exp(-t r^2 / (c_P osc(u)^2))` on chains.
    Hoeffding,
    /// `exp(-t r^2 / (4 c^2 lip^2))`.
    LipschitzGauss { c: f64, lip: f64 },
    /// `||d beta/d mu||_2 exp(-t alpha(r))`.
    Rate { alpha: RateFunction },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub observable: Observable,
    pub t: f64,
    pub n_paths: usize,
    pub radii: Vec<f64>,
    pub bound: BoundSpec,
    #[serde(default = "d_step")]
    pub sde_step: f64,
    #[serde(default)]
    pub exact_ou: bool,
    #[serde(default = "d_initial")]
    pub initial: InitialLaw,
    #[serde(default)]
    pub dump_samples: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorizeParams {
    #[serde(default = "d_100")]
    pub n_densities: usize,
    #[serde(default = "d_100")]
    pub r_points: usize,
    /// Constant of the quadratic rate used for the inf-convolution check.
    #[serde(default = "d_07")]
    pub alpha_c: f64,
}

fn d_true() -> bool {
    true
}
fn d_100() -> usize {
    100
}
fn d_199() -> usize {
    199
}
fn d_1000() -> usize {
    1000
}
fn d_10000() -> usize {
    10_000
}
fn d_6() -> usize {
    6
}
fn d_1e9() -> f64 {
    1e-9
}
fn d_1e10() -> f64 {
    1e-10
}
fn d_half() -> f64 {
    0.5
}
fn d_07() -> f64 {
    0.7
}
fn d_002() -> f64 {
    0.02
}
fn d_step() -> f64 {
    1e-3
}
fn d_initial() -> InitialLaw {
    InitialLaw::Stationary
}
fn d_p_values() -> Vec<f64> {
    (1..=9).map(|k| 0.1 * k as f64).collect()
}
fn d_lambdas() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9, 2.0]
}
fn d_rhos() -> Vec<RhoKind> {
    vec![RhoKind::Identity, RhoKind::TanhWarp, RhoKind::Intrinsic]
}

pub enum Params {
    VerifyTci(VerifyTciParams),
    BestConstant(BestConstantParams),
    CkpScan(CkpScanParams),
    RhoScan(RhoScanParams),
    Diffusion(DiffusionParams),
    Lyapunov(LyapunovParams),
    Simulate(Box<SimulateParams>),
    Tensorize(TensorizeParams),
}

/// A validated experiment, ready to run.
pub struct Plan {
    pub name: String,
    pub kind: Kind,
    pub seed: u64,
    pub model: Option<Model>,
    pub params: Params,
}

fn typed<T: DeserializeOwned>(kind: Kind, v: &Option<Value>) -> Result<T, CliError> {
    let v = v.clone().unwrap_or_else(|| Value::Object(Default::default()));
    serde_json::from_value(v).map_err(|e| CliError::ConfigParse(format!("{} params: {e}", kind.as_str())))
}

pub fn parse(text: &str) -> Result<ExperimentSpec, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::ConfigParse(e.to_string()))
}

/// Validate a spec (recursively for suites) into flat plans. Seeds come from
/// `seed_override`, else the experiment, else its suite, else 0.
pub fn plan(spec: &ExperimentSpec, base: &Path, seed_override: Option<u64>) -> anyhow::Result<Vec<Plan>> {
    let mut out = Vec::new();
    plan_into(spec, base, seed_override, None, &mut out)?;
    let mut names: Vec<&str> = out.iter().map(|p| p.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::ConfigParse(format!("duplicate experiment name `{}`", w[0])).into());
    }
    Ok(out)
}

fn plan_into(
    spec: &ExperimentSpec,
    base: &Path,
    seed_override: Option<u64>,
    suite_seed: Option<u64>,
    out: &mut Vec<Plan>,
) -> anyhow::Result<()> {
    let seed = seed_override.or(spec.seed).or(suite_seed).unwrap_or(0);
    if spec.kind == Kind::PaperSuite {
        if spec.model.is_some() || spec.params.is_some() {
            return Err(CliError::ConfigParse("paper-suite takes `experiments`, not `model` or `params`".into()).into());
        }
        let members = if spec.experiments.is_empty() { bundled_suite() } else { spec.experiments.clone() };
        for m in &members {
            if m.kind == Kind::PaperSuite {
                return Err(CliError::ConfigParse("paper-suite cannot nest".into()).into());
            }
            plan_into(m, base, seed_override, Some(seed), out)?;
        }
        return Ok(());
    }
    if !spec.experiments.is_empty() {
        return Err(CliError::ConfigParse(format!("`experiments` is only valid for paper-suite, not {}", spec.kind.as_str())).into());
    }
    let params = match spec.kind {
        Kind::VerifyTci => Params::VerifyTci(typed(spec.kind, &spec.params)?),
        Kind::BestConstant => Params::BestConstant(typed(spec.kind, &spec.params)?),
        Kind::CkpScan => Params::CkpScan(typed(spec.kind, &spec.params)?),
        Kind::RhoScan => Params::RhoScan(typed(spec.kind, &spec.params)?),
        Kind::Diffusion => Params::Diffusion(typed(spec.kind, &spec.params)?),
        Kind::Lyapunov => Params::Lyapunov(typed(spec.kind, &spec.params)?),
        Kind::Simulate => Params::Simulate(Box::new(typed(spec.kind, &spec.params)?)),
        Kind::Tensorize => Params::Tensorize(typed(spec.kind, &spec.params)?),
        Kind::PaperSuite => unreachable!(),
    };
    let model = match (&spec.model, spec.kind.needs_model()) {
        (Some(m), _) => Some(models::load(m, base)?),
        (None, true) => return Err(CliError::ConfigParse(format!("{} needs a `model`", spec.kind.as_str())).into()),
        (None, false) => None,
    };
    let name = spec.name.clone().unwrap_or_else(|| format!("{}-{}", spec.kind.as_str(), out.len()));
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(CliError::ConfigParse(format!("experiment name `{name}` is not a plain file name")).into());
    }
    out.push(Plan { name, kind: spec.kind, seed, model, params });
    Ok(())
}

/// The default paper-suite: one experiment per bundled example family.
pub fn bundled_suite() -> Vec<ExperimentSpec> {
    let v = serde_json::json!([
        {"kind": "best-constant", "name": "bernoulli-constants",
         "model": {"example": "bernoulli", "p": 0.3}, "params": {"expect_c_p": 0.21}},
        {"kind": "verify-tci", "name": "jump2-w1i", "model": {"example": "jump2", "p": 0.3}},
        {"kind": "ckp-scan", "name": "ckp"},
        {"kind": "rho-scan", "name": "rho"},
        {"kind": "diffusion", "name": "ou", "model": {"example": "ou"}, "params": {"cutoff": 6.0}},
        {"kind": "diffusion", "name": "quartic", "model": {"example": "quartic"}},
        {"kind": "diffusion", "name": "gauss-shift", "model": {"example": "gauss-shift"}},
        {"kind": "lyapunov", "name": "mminf", "model": {"example": "mminf"}},
        {"kind": "lyapunov", "name": "beta-potential", "model": {"example": "beta-potential"}},
        {"kind": "tensorize", "name": "product", "model": {"example": "product-3x3"}},
        {"kind": "simulate", "name": "bernoulli-hoeffding", "model": {"example": "bernoulli", "p": 0.3},
         "params": {"observable": {"kind": "state", "values": [0.0, 1.0]}, "t": 20.0, "n_paths": 20000,
                    "radii": [0.1, 0.2, 0.3], "bound": {"kind": "hoeffding"}}},
        {"kind": "simulate", "name": "ou-lipschitz", "model": {"example": "ou"},
         "params": {"observable": {"kind": "linear", "w": [1.0]}, "t": 100.0, "n_paths": 10000,
                    "radii": [0.5], "exact_ou": true, "bound": {"kind": "lipschitz-gauss", "c": 1.0, "lip": 1.0}}}
    ]);
    serde_json::from_value(v).expect("bundled suite is well formed")
}
