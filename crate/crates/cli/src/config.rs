//! Run and scenario configuration files (TOML), with dotted-key command
//! line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dpfactor::io::NamedTransformTerm;
use dpfactor::model::{
    DepthLaw, EffectPattern, Hyperparams, Link, ScenarioSpec, SigmaLaw, YBlockSpec,
};
use dpfactor::sampler::{InitStrategy, SamplerConfig};
use dpfactor::{Error, Result};

/// Paths of one analysis run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    pub otu: PathBuf,
    pub covariates: PathBuf,
    pub output: PathBuf,
}

/// Model block: hyperparameters, grouping, and covariate handling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Factor truncation; defaults to `min(I, J, 30)`.
    pub k: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_a1")]
    pub mgp_a1: f64,
    #[serde(default = "default_a2")]
    pub mgp_a2: f64,
    /// Covariate column holding the individual identifier.
    #[serde(default)]
    pub grouping: Option<String>,
    /// Covariates that must be coded 0/1.
    #[serde(default)]
    pub binary: Vec<String>,
    /// Expansion terms (interactions, splines).
    #[serde(default)]
    pub transform: Vec<NamedTransformTerm>,
}

fn default_alpha() -> f64 {
    1.0
}
fn default_a1() -> f64 {
    2.0
}
fn default_a2() -> f64 {
    3.0
}

impl ModelConfig {
    pub fn hyperparams(&self, n_species: usize, n_samples: usize) -> Result<Hyperparams> {
        let defaults = Hyperparams::default_for(n_species, n_samples);
        let h = Hyperparams {
            alpha: self.alpha,
            k: self.k.unwrap_or(defaults.k),
            mgp_a1: self.mgp_a1,
            mgp_a2: self.mgp_a2,
            error_variance: 1.0,
        };
        h.validate_for(n_species)?;
        Ok(h)
    }
}

/// Sampler block mirroring [`SamplerConfig`] with optional fields.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SamplerBlock {
    pub n_iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub slice_width_q: Option<f64>,
    pub slice_width_sigma: Option<f64>,
    pub slice_max_steps: Option<usize>,
    pub init: Option<InitStrategy>,
    pub checkpoint_every: Option<usize>,
}

impl SamplerBlock {
    pub fn config(&self, seed: u64) -> Result<SamplerConfig> {
        let d = SamplerConfig::default();
        let cfg = SamplerConfig {
            n_iterations: self.n_iterations.unwrap_or(d.n_iterations),
            burn_in: self.burn_in.unwrap_or(d.burn_in),
            thin: self.thin.unwrap_or(d.thin),
            slice_width_q: self.slice_width_q.unwrap_or(d.slice_width_q),
            slice_width_sigma: self.slice_width_sigma.unwrap_or(d.slice_width_sigma),
            slice_max_steps: self.slice_max_steps.unwrap_or(d.slice_max_steps),
            init: self.init.unwrap_or(InitStrategy::DataInformed),
            seed,
            checkpoint_every: self.checkpoint_every.unwrap_or(d.checkpoint_every),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Summaries requested by `summarize` (and trend scoring defaults).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummarizeConfig {
    /// Covariate whose population trend is computed.
    #[serde(default)]
    pub trend_covariate: Option<String>,
    #[serde(default = "default_trend_range")]
    pub trend_range: (f64, f64),
    #[serde(default = "default_trend_points")]
    pub trend_points: usize,
    /// Values of the remaining raw covariates, one arm per entry; the trend
    /// covariate's slot is overwritten by the grid.
    #[serde(default)]
    pub trend_arms: Vec<Vec<f64>>,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Covariate whose per-sample derivatives are reported.
    #[serde(default)]
    pub derivative_covariate: Option<String>,
    #[serde(default = "default_span")]
    pub lowess_span: f64,
    /// Binary covariate whose discrete differences are reported.
    #[serde(default)]
    pub difference_covariate: Option<String>,
}

fn default_trend_range() -> (f64, f64) {
    (-2.0, 2.0)
}
fn default_trend_points() -> usize {
    20
}
fn default_level() -> f64 {
    0.95
}
fn default_span() -> f64 {
    2.0 / 3.0
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        SummarizeConfig {
            trend_covariate: None,
            trend_range: default_trend_range(),
            trend_points: default_trend_points(),
            trend_arms: Vec::new(),
            level: default_level(),
            derivative_covariate: None,
            lowess_span: default_span(),
            difference_covariate: None,
        }
    }
}

impl SummarizeConfig {
    pub fn grid(&self) -> Vec<f64> {
        let (lo, hi) = self.trend_range;
        let n = self.trend_points.max(2);
        (0..n)
            .map(|t| lo + (hi - lo) * t as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Permutation-test block. The default refit budget is shortened relative
/// to primary fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PermtestConfig {
    #[serde(default = "default_n_perm")]
    pub n_permutations: usize,
    #[serde(default = "default_perm_iterations")]
    pub n_iterations: usize,
    #[serde(default = "default_perm_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_perm_thin")]
    pub thin: usize,
}

fn default_n_perm() -> usize {
    100
}
fn default_perm_iterations() -> usize {
    20_000
}
fn default_perm_burn_in() -> usize {
    10_000
}
fn default_perm_thin() -> usize {
    10
}

impl Default for PermtestConfig {
    fn default() -> Self {
        PermtestConfig {
            n_permutations: default_n_perm(),
            n_iterations: default_perm_iterations(),
            burn_in: default_perm_burn_in(),
            thin: default_perm_thin(),
        }
    }
}

/// The single configuration file driving every command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_chains")]
    pub chains: usize,
    pub paths: PathsConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub sampler: SamplerBlock,
    #[serde(default)]
    pub summarize: SummarizeConfig,
    #[serde(default)]
    pub permtest: PermtestConfig,
}

fn default_chains() -> usize {
    1
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::config("chains must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Scenario file: an optional preset plus field overrides.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScenarioFile {
    /// `desk` or `benchmark`.
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub n_species: Option<usize>,
    pub n_samples: Option<usize>,
    pub n_individuals: Option<usize>,
    pub n_factors: Option<usize>,
    pub link: Option<Link>,
    pub error_variance: Option<f64>,
    pub zero_threshold: Option<f64>,
    pub depth: Option<DepthLaw>,
    pub sigma: Option<SigmaFile>,
    pub effects: Option<EffectsFile>,
    pub y_block: Option<YBlockSpec>,
}

/// Species-weight Beta law, by moments or by shapes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaFile {
    Moments { mean: f64, variance: f64 },
    Shapes { a: f64, b: f64 },
}

/// Effect matrix specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "kebab-case")]
pub enum EffectsFile {
    Zero,
    Table {
        #[serde(default = "default_active")]
        active: usize,
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default)]
        null_rows: Vec<usize>,
    },
    Custom {
        rows: Vec<Vec<f64>>,
    },
}

fn default_active() -> usize {
    16
}
fn default_scale() -> f64 {
    1.0
}

impl ScenarioFile {
    pub fn resolve(&self) -> Result<ScenarioSpec> {
        let mut spec = match self.preset.as_deref() {
            None | Some("desk") => ScenarioSpec::desk(),
            Some("benchmark") => ScenarioSpec::benchmark(),
            Some(other) => {
                return Err(Error::config(format!(
                    "unknown preset '{other}' (expected 'desk' or 'benchmark')"
                )))
            }
        };
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(v) = self.n_species {
            spec.n_species = v;
        }
        if let Some(v) = self.n_samples {
            spec.n_samples = v;
        }
        if let Some(v) = self.n_individuals {
            spec.n_individuals = v;
        }
        if let Some(v) = self.n_factors {
            spec.n_factors = v;
        }
        if let Some(v) = self.link {
            spec.link = v;
        }
        if let Some(v) = self.error_variance {
            spec.error_variance = v;
        }
        if let Some(v) = self.zero_threshold {
            spec.zero_threshold = v;
        }
        if let Some(v) = self.depth {
            spec.depth_law = v;
        }
        if let Some(v) = &self.sigma {
            spec.sigma_law = match *v {
                SigmaFile::Moments { mean, variance } => {
                    SigmaLaw::from_mean_variance(mean, variance)?
                }
                SigmaFile::Shapes { a, b } => SigmaLaw::new(a, b)?,
            };
        }
        if let Some(v) = &self.effects {
            spec.effects = match v {
                EffectsFile::Zero => EffectPattern::Zero,
                EffectsFile::Table {
                    active,
                    scale,
                    null_rows,
                } => EffectPattern::Table {
                    active: *active,
                    scale: *scale,
                    null_rows: null_rows.clone(),
                },
                EffectsFile::Custom { rows } => EffectPattern::Custom(rows.clone()),
            };
        }
        if let Some(v) = self.y_block {
            spec.y_block = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Applies a `key.path=value` override to a parsed TOML document. Values
/// parse as TOML literals where possible and fall back to strings.
pub fn apply_override(doc: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| {
        Error::config(format!("override '{assignment}' is not of the form key.path=value"))
    })?;
    // interpret the right-hand side as a TOML literal, else a string
    let parsed: toml::Value = match format!("value = {value}").parse::<toml::Value>() {
        Ok(doc) => doc
            .as_table()
            .and_then(|t| t.get("value"))
            .cloned()
            .unwrap_or_else(|| toml::Value::String(value.to_string())),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let mut node = doc;
    let parts: Vec<&str> = key.trim().split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| {
            Error::config(format!("override '{key}': '{part}' is not a table"))
        })?;
        if depth + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    unreachable!("override path cannot be empty")
}

/// Loads a TOML file, applies overrides, and deserializes it.
pub fn load_toml<T: serde::de::DeserializeOwned>(path: &Path, overrides: &[String]) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let mut doc: toml::Value = text
        .parse()
        .map_err(|e| Error::parse(0, format!("{}: {e}", path.display())))?;
    for assignment in overrides {
        apply_override(&mut doc, assignment)?;
    }
    doc.try_into()
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// Stable hash of the effective configuration.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    Ok(dpfactor::io::sha256_bytes(&serde_json::to_vec(config)?))
}
