//! Bundled example models and model loading.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use transinfo::diffusion::{discretize, DiffusionFile, DiffusionSpec1D, Grid1D};
use transinfo::lyapunov::{beta_potential_example, mminf_generator, BetaExample};
use transinfo::sample::{chain_from_conductances, random_reversible_chain};
use transinfo::trivial_metric::jump2;
use transinfo::{build_chain, product_chain, DMatrix, MetricMatrix, ReversibleChain};

use crate::spec::CliError;

/// Chain file: `rates[x][y]` is the jump rate from `x` to `y`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    #[serde(default)]
    pub states: Vec<String>,
    pub rates: Vec<Vec<f64>>,
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    /// Optional metric matrix paired with the chain.
    #[serde(default)]
    pub metric: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Example {
        example: String,
        #[serde(flatten)]
        params: Map<String, Value>,
    },
    File {
        file: PathBuf,
    },
    Product {
        factors: Vec<ModelRef>,
    },
    Chain(ChainFile),
    Diffusion(DiffusionFile),
}

pub enum Loaded {
    Chain { chain: ReversibleChain, metric: Option<MetricMatrix> },
    Diffusion { spec: DiffusionSpec1D, grid: Grid1D, ou: bool },
    Mminf { chain: ReversibleChain, lambda_rate: f64 },
    Beta(Box<BetaExample>),
    GaussShift { spec: DiffusionSpec1D, grid: Grid1D, m: f64 },
    Product { factors: Vec<ReversibleChain> },
}

pub struct Model {
    pub label: String,
    pub loaded: Loaded,
}

pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: &'static str,
}

pub const CATALOG: [CatalogEntry; 8] = [
    CatalogEntry { name: "bernoulli", summary: "two-state chain with unit conductance, mu = (1-p, p)", params: "p=0.3" },
    CatalogEntry { name: "jump2", summary: "two-state jump chain Q[x,y] = mu_y, mu = (1-p, p)", params: "p=0.3" },
    CatalogEntry { name: "ou", summary: "Ornstein-Uhlenbeck diffusion a=1, b=-x on [-8, 8]", params: "n=400" },
    CatalogEntry { name: "quartic", summary: "diffusion a=1, b=-x^3 on an automatic window", params: "n=400" },
    CatalogEntry { name: "mminf", summary: "truncated M/M/inf queue, arrivals lambda, unit service", params: "lambda=1, n_max=40" },
    CatalogEntry {
        name: "beta-potential",
        summary: "diffusion a=1, b=-V' with V ~ |x|^beta/beta, discretized",
        params: "beta=2, c_v=0.5, n=200",
    },
    CatalogEntry { name: "gauss-shift", summary: "discretized OU with the N(m,1)/N(0,1) density", params: "m=0.5, n=400" },
    CatalogEntry { name: "product-3x3", summary: "product of two fixed random 3-state chains", params: "seed=9" },
];

fn num(params: &Map<String, Value>, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v.as_f64().with_context(|| format!("model parameter `{key}` must be a number")),
    }
}

fn count(params: &Map<String, Value>, key: &str, default: usize) -> Result<usize> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v.as_u64().map(|v| v as usize).with_context(|| format!("model parameter `{key}` must be a count")),
    }
}

fn check_keys(params: &Map<String, Value>, allowed: &[&str]) -> Result<()> {
    if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        bail!("unknown model parameter `{k}`");
    }
    Ok(())
}

pub fn bernoulli(p: f64) -> transinfo::Result<ReversibleChain> {
    if !(p > 0.0 && p < 1.0) {
        return Err(transinfo::Error::InvalidInput(format!("p = {p} must lie in (0, 1)")));
    }
    Ok(chain_from_conductances(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), &[1.0 - p, p]))
}

fn example(name: &str, params: &Map<String, Value>) -> Result<Model> {
    let label = if params.is_empty() {
        name.to_string()
    } else {
        let kv: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{name}({})", kv.join(","))
    };
    let loaded = match name {
        "bernoulli" | "jump2" => {
            check_keys(params, &["p"])?;
            let p = num(params, "p", 0.3)?;
            let chain = if name == "bernoulli" { bernoulli(p)? } else { jump2(p)? };
            Loaded::Chain { chain, metric: Some(MetricMatrix::trivial(2)) }
        }
        "ou" => {
            check_keys(params, &["n"])?;
            Loaded::Diffusion { spec: DiffusionSpec1D::ou(), grid: Grid1D::uniform(-8.0, 8.0, count(params, "n", 400)?)?, ou: true }
        }
        "quartic" => {
            check_keys(params, &["n"])?;
            let spec = DiffusionSpec1D::quartic();
            let grid = Grid1D::auto(&spec, count(params, "n", 400)?)?;
            Loaded::Diffusion { spec, grid, ou: false }
        }
        "mminf" => {
            check_keys(params, &["lambda", "n_max"])?;
            let lambda_rate = num(params, "lambda", 1.0)?;
            let (chain, _) = mminf_generator(lambda_rate, count(params, "n_max", 40)?)?;
            Loaded::Mminf { chain, lambda_rate }
        }
        "beta-potential" => {
            check_keys(params, &["beta", "c_v", "n"])?;
            let ex = beta_potential_example(num(params, "beta", 2.0)?, num(params, "c_v", 0.5)?, count(params, "n", 200)?)?;
            Loaded::Beta(Box::new(ex))
        }
        "gauss-shift" => {
            check_keys(params, &["m", "n"])?;
            Loaded::GaussShift {
                spec: DiffusionSpec1D::ou(),
                grid: Grid1D::uniform(-8.0, 8.0, count(params, "n", 400)?)?,
                m: num(params, "m", 0.5)?,
            }
        }
        "product-3x3" => {
            check_keys(params, &["seed"])?;
            let mut rng = ChaCha8Rng::seed_from_u64(count(params, "seed", 9)? as u64);
            Loaded::Product { factors: vec![random_reversible_chain(&mut rng, 3), random_reversible_chain(&mut rng, 3)] }
        }
        other => bail!("unknown example model `{other}` (see list-examples)"),
    };
    Ok(Model { label, loaded })
}

fn chain_from_file(f: &ChainFile) -> Result<Loaded> {
    let n = f.rates.len();
    if f.rates.iter().any(|r| r.len() != n) {
        bail!("rates must be a square matrix");
    }
    let rates = DMatrix::from_fn(n, n, |i, j| f.rates[i][j]);
    let mut chain = build_chain(&rates, f.mu.as_deref())?;
    if !f.states.is_empty() {
        chain = chain.with_states(f.states.clone())?;
    }
    let metric = match &f.metric {
        None => None,
        Some(m) => {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                bail!("metric must be {n} x {n}");
            }
            Some(MetricMatrix::new(DMatrix::from_fn(n, n, |i, j| m[i][j]))?)
        }
    };
    Ok(Loaded::Chain { chain, metric })
}

fn diffusion_from_file(f: &DiffusionFile) -> Result<Loaded> {
    let spec = DiffusionSpec1D::from_file(f)?;
    let grid = Grid1D::auto(&spec, 400)?;
    Ok(Loaded::Diffusion { spec, grid, ou: false })
}

/// Model files are either chain or diffusion JSON.
fn load_file(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::ConfigParse(format!("cannot read model file {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::ConfigParse(format!("model file {}: {e}", path.display())))?;
    let loaded = if value.get("rates").is_some() {
        let f: ChainFile = serde_json::from_value(value)
            .map_err(|e| CliError::ConfigParse(format!("model file {}: {e}", path.display())))?;
        chain_from_file(&f)?
    } else {
        let f: DiffusionFile = serde_json::from_value(value)
            .map_err(|e| CliError::ConfigParse(format!("model file {}: {e}", path.display())))?;
        diffusion_from_file(&f)?
    };
    Ok(Model { label: path.display().to_string(), loaded })
}

/// Resolve a reference; relative file paths are taken from `base`.
pub fn load(r: &ModelRef, base: &Path) -> Result<Model> {
    let m = match r {
        ModelRef::Example { example: name, params } => example(name, params),
        ModelRef::File { file } => return load_file(&base.join(file)),
        ModelRef::Chain(f) => chain_from_file(f).map(|loaded| Model { label: "inline-chain".into(), loaded }),
        ModelRef::Diffusion(f) => diffusion_from_file(f).map(|loaded| Model { label: "inline-diffusion".into(), loaded }),
        ModelRef::Product { factors } => {
            let mut chains = Vec::new();
            let mut labels = Vec::new();
            for f in factors {
                let m = load(f, base)?;
                labels.push(m.label.clone());
                chains.push(m.chain()?);
            }
            Ok(Model { label: format!("product[{}]", labels.join(" x ")), loaded: Loaded::Product { factors: chains } })
        }
    };
    m.map_err(|e| match e.downcast::<CliError>() {
        Ok(c) => c.into(),
        Err(e) => CliError::ModelValidation(format!("{e:#}")).into(),
    })
}

impl Model {
    /// Finite reversible chain behind the model.
    pub fn chain(&self) -> Result<ReversibleChain> {
        Ok(match &self.loaded {
            Loaded::Chain { chain, .. } | Loaded::Mminf { chain, .. } => chain.clone(),
            Loaded::Diffusion { spec, grid, .. } | Loaded::GaussShift { spec, grid, .. } => discretize(spec, grid)?,
            Loaded::Beta(ex) => ex.chain.clone(),
            Loaded::Product { factors } => product_chain(&factors.iter().collect::<Vec<_>>())?,
        })
    }

    /// Metric used when an experiment does not name one: the attached
    /// matrix, the line metric on grid nodes or queue lengths, else trivial.
    pub fn default_metric(&self, n: usize) -> Result<MetricMatrix> {
        Ok(match &self.loaded {
            Loaded::Chain { metric: Some(m), .. } => m.clone(),
            Loaded::Diffusion { grid, .. } | Loaded::GaussShift { grid, .. } => MetricMatrix::line(grid.nodes())?,
            Loaded::Beta(ex) => MetricMatrix::line(ex.grid.nodes())?,
            Loaded::Mminf { .. } => MetricMatrix::line(&(0..n).map(|i| i as f64).collect::<Vec<_>>())?,
            _ => MetricMatrix::trivial(n),
        })
    }

    pub fn positions(&self) -> Option<Vec<f64>> {
        match &self.loaded {
            Loaded::Diffusion { grid, .. } | Loaded::GaussShift { grid, .. } => Some(grid.nodes().to_vec()),
            Loaded::Beta(ex) => Some(ex.grid.nodes().to_vec()),
            Loaded::Mminf { chain, .. } => Some((0..chain.n()).map(|i| i as f64).collect()),
            _ => None,
        }
    }
}
