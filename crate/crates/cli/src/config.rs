//! JSON run configuration: schema, defaults and semantic validation.

use std::fmt;

use risklab::copulas::{Copula, DependenceSpec};
use risklab::counterexample::CounterexampleDensity;
use risklab::marginals::Marginal;
use risklab::renewal::lambda_support;
use risklab::simulator::{ModelConfig, Premium};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Asymptotic,
    Compare,
    Renewal,
    CopulaCheck,
    Counterexample,
    VerifyConditions,
    Lemma33,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Experiment::Simulate => "simulate",
            Experiment::Asymptotic => "asymptotic",
            Experiment::Compare => "compare",
            Experiment::Renewal => "renewal",
            Experiment::CopulaCheck => "copula-check",
            Experiment::Counterexample => "counterexample",
            Experiment::VerifyConditions => "verify-conditions",
            Experiment::Lemma33 => "lemma33",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalDoc {
    Pareto { alpha: f64 },
    Weibull { shape: f64, scale: f64 },
    Exponential { rate: f64 },
    Deterministic { point: f64 },
    Counterexample {
        #[serde(default = "default_blocks")]
        n_max: u32,
    },
}

fn default_blocks() -> u32 {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DependenceDoc {
    Independent,
    SarmanovFgm { gamma: [f64; 3] },
    FrankTri { gamma: f64 },
    NestedFrankProduct { gamma: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PremiumDoc {
    Linear { rate: f64 },
    CompoundPoisson { rate: f64, jump: MarginalDoc },
}

impl Default for PremiumDoc {
    fn default() -> Self {
        PremiumDoc::Linear { rate: 0.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub claims: [MarginalDoc; 2],
    pub inter_arrival: MarginalDoc,
    #[serde(default = "default_dependence")]
    pub dependence: DependenceDoc,
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub premiums: [PremiumDoc; 2],
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub n_samples: u64,
    #[serde(default = "default_batches")]
    pub n_batches: u64,
}

fn default_dependence() -> DependenceDoc {
    DependenceDoc::Independent
}

fn default_samples() -> u64 {
    1_000_000
}

fn default_batches() -> u64 {
    64
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsDoc {
    #[serde(default)]
    pub t: Vec<f64>,
    #[serde(default)]
    pub x: Vec<f64>,
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default)]
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDoc {
    pub experiment: Option<Experiment>,
    pub model: ModelDoc,
    #[serde(default)]
    pub grids: GridsDoc,
    /// Window widths `(d1, d2)`.
    #[serde(default = "default_window")]
    pub window: [f64; 2],
    /// Renewal grid step; defaults to `T / 2000`.
    pub renewal_step: Option<f64>,
    /// Post-stratify `simulate` by `N(t)` up to this count.
    pub stratify_n_cap: Option<usize>,
    /// `simulate` targets the total net loss instead of the discounted claims.
    #[serde(default)]
    pub net_loss: bool,
    #[serde(default = "default_lemma_n")]
    pub lemma33_n: usize,
    /// Number of random boxes per copula in `copula-check`.
    #[serde(default = "default_boxes")]
    pub copula_boxes: usize,
    pub output: Option<String>,
}

fn default_window() -> [f64; 2] {
    [1.0, 1.0]
}

fn default_lemma_n() -> usize {
    2
}

fn default_boxes() -> usize {
    100_000
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub model: ModelConfig,
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub z_grid: Vec<f64>,
    pub window: [f64; 2],
    pub renewal_step: f64,
    pub stratify_n_cap: Option<usize>,
    pub net_loss: bool,
    pub lemma33_n: usize,
    pub copula_boxes: usize,
    pub output: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError { path: path.to_string(), message: message.to_string() }
}

fn marginal(doc: &MarginalDoc, path: &str) -> Result<Marginal, ConfigError> {
    let built = match *doc {
        MarginalDoc::Pareto { alpha } => Marginal::pareto(alpha),
        MarginalDoc::Weibull { shape, scale } => Marginal::weibull(shape, scale),
        MarginalDoc::Exponential { rate } => Marginal::exponential(rate),
        MarginalDoc::Deterministic { point } => Marginal::deterministic(point),
        MarginalDoc::Counterexample { n_max } => CounterexampleDensity::with_blocks(n_max).map(Marginal::counterexample),
    };
    built.map_err(|e| err(path, e))
}

fn copula(doc: &DependenceDoc) -> Result<Copula, ConfigError> {
    let path = "model.dependence.gamma";
    match *doc {
        DependenceDoc::Independent => Ok(Copula::independent()),
        DependenceDoc::SarmanovFgm { gamma: [g12, g13, g23] } => Copula::sarmanov_fgm(g12, g13, g23).map_err(|e| err(path, e)),
        DependenceDoc::FrankTri { gamma } => Copula::frank_tri(gamma).map_err(|e| err(path, e)),
        DependenceDoc::NestedFrankProduct { gamma } => Copula::nested_frank_product(gamma).map_err(|e| err(path, e)),
    }
}

fn premium(doc: &PremiumDoc, path: &str) -> Result<Premium, ConfigError> {
    Ok(match doc {
        PremiumDoc::Linear { rate } => Premium::Linear { rate: *rate },
        PremiumDoc::CompoundPoisson { rate, jump } => {
            Premium::CompoundPoisson { rate: *rate, jump: marginal(jump, &format!("{path}.jump"))? }
        }
    })
}

fn finite_grid(grid: &[f64], path: &str) -> Result<(), ConfigError> {
    match grid.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(err(&format!("{path}[{k}]"), "grid values must be finite")),
        None => Ok(()),
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: RunDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        err(&path, e.into_inner())
    })?;
    build(doc)
}

fn build(doc: RunDoc) -> Result<RunConfig, ConfigError> {
    let m = &doc.model;
    let claim1 = marginal(&m.claims[0], "model.claims[0]")?;
    let claim2 = marginal(&m.claims[1], "model.claims[1]")?;
    let g = marginal(&m.inter_arrival, "model.inter_arrival")?;
    let cop = copula(&m.dependence)?;
    let mut warnings = cop.warnings();
    if let DependenceDoc::NestedFrankProduct { gamma } = m.dependence {
        if gamma >= 1.0 {
            warnings.push(format!(
                "nested Frank-product with gamma={gamma}: a_* > 0 in Condition 3 requires 0 < gamma < 1"
            ));
        }
    }
    let spec = DependenceSpec::new(cop, claim1, claim2, g);
    let premiums = [premium(&m.premiums[0], "model.premiums[0]")?, premium(&m.premiums[1], "model.premiums[1]")?];
    if !(m.horizon > 0.0) || !m.horizon.is_finite() {
        return Err(err("model.horizon", format!("horizon must be positive and finite, got {}", m.horizon)));
    }
    let support = lambda_support(&spec.inter_arrival);
    if !support.contains(m.horizon) {
        return Err(err(
            "model.horizon",
            format!("T={} is not in Lambda; arrivals start at {}", m.horizon, support.lower),
        ));
    }
    let model = ModelConfig {
        spec,
        r: m.r,
        premiums,
        horizon: m.horizon,
        seed: m.seed,
        n_samples: m.n_samples,
        n_batches: m.n_batches,
    };
    model.validate().map_err(|e| err("model", e))?;

    let grids = &doc.grids;
    finite_grid(&grids.t, "grids.t")?;
    finite_grid(&grids.x, "grids.x")?;
    finite_grid(&grids.s, "grids.s")?;
    finite_grid(&grids.z, "grids.z")?;
    if let Some(k) = grids.t.iter().position(|&t| !(t > support.lower) || t > m.horizon) {
        return Err(err(&format!("grids.t[{k}]"), format!("t must lie in ({}, {}]", support.lower, m.horizon)));
    }
    if let Some(k) = grids.x.iter().position(|&x| x < 0.0) {
        return Err(err(&format!("grids.x[{k}]"), "levels must be >= 0"));
    }
    if let Some(k) = doc.window.iter().position(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(err(&format!("window[{k}]"), "window widths must be positive and finite"));
    }
    let renewal_step = doc.renewal_step.unwrap_or(m.horizon / 2000.0);
    if !(renewal_step > 0.0) || renewal_step > m.horizon / 10.0 {
        return Err(err("renewal_step", format!("step must lie in (0, T/10], got {renewal_step}")));
    }
    if !(1..=3).contains(&doc.lemma33_n) {
        return Err(err("lemma33_n", "must be 1, 2 or 3"));
    }
    Ok(RunConfig {
        experiment: doc.experiment,
        model,
        t_grid: grids.t.clone(),
        x_grid: grids.x.clone(),
        s_grid: grids.s.clone(),
        z_grid: grids.z.clone(),
        window: doc.window,
        renewal_step,
        stratify_n_cap: doc.stratify_n_cap,
        net_loss: doc.net_loss,
        lemma33_n: doc.lemma33_n,
        copula_boxes: doc.copula_boxes,
        output: doc.output,
        warnings,
    })
}

impl RunConfig {
    /// Checks that the grids an experiment reads are present.
    pub fn require_grids(&self, experiment: Experiment) -> Result<(), ConfigError> {
        let need: &[(&str, &Vec<f64>)] = match experiment {
            Experiment::Simulate | Experiment::Asymptotic | Experiment::Compare | Experiment::Lemma33 => {
                &[("grids.t", &self.t_grid), ("grids.x", &self.x_grid)]
            }
            Experiment::VerifyConditions => &[("grids.s", &self.s_grid), ("grids.x", &self.x_grid)],
            Experiment::Renewal | Experiment::CopulaCheck | Experiment::Counterexample => &[],
        };
        for (path, grid) in need {
            if grid.is_empty() {
                return Err(err(path, format!("`{experiment}` needs a nonempty grid")));
            }
        }
        Ok(())
    }
}
