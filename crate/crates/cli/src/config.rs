//! Experiment configuration, read from TOML or JSON.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use deco_core::datagen::ModelSpec;
use deco_core::deco::{DecoConfig, Method};
use serde::{Deserialize, Serialize};

/// A design matrix stored as CSV, with the response picked by column name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub response: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Synthetic model; each replication redraws it with its own seed.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// Observed data; replications then differ only in the partition.
    #[serde(default)]
    pub csv: Option<CsvSource>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "default_m_values")]
    pub m_values: Vec<usize>,
    #[serde(default)]
    pub deco: DecoConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Base seed. Replication `r` uses `seed + r` for its data and its
    /// partition.
    #[serde(default)]
    pub seed: u64,
    /// Trailing CSV rows held out for prediction error. Synthetic models
    /// set `model.holdout` instead.
    #[serde(default)]
    pub holdout: usize,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Deco2, Method::Deco3]
}

fn one() -> usize {
    1
}

fn default_m_values() -> Vec<usize> {
    vec![1]
}

impl ExperimentConfig {
    pub fn from_str_with_ext(text: &str, ext: &str) -> Result<Self> {
        let cfg: ExperimentConfig = match ext {
            "json" => serde_json::from_str(text).context("parsing JSON config")?,
            _ => toml::from_str(text).context("parsing TOML config")?,
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("toml");
        let mut cfg = Self::from_str_with_ext(&text, ext).with_context(|| format!("in {}", path.display()))?;
        // Relative CSV paths are taken from the config's directory.
        if let (Some(csv), Some(dir)) = (cfg.csv.as_mut(), path.parent()) {
            if csv.path.is_relative() {
                csv.path = dir.join(&csv.path);
            }
        }
        Ok(cfg)
    }

    /// Checks everything that can be checked without reading data. `p` is
    /// the design width when known.
    pub fn validate(&self, p: Option<usize>) -> Result<()> {
        match (&self.model, &self.csv) {
            (Some(_), Some(_)) => bail!("set either `model` or `csv`, not both"),
            (None, None) => bail!("one of `model` or `csv` is required"),
            (Some(spec), None) => spec.validate()?,
            (None, Some(_)) => {}
        }
        if self.replications == 0 {
            bail!("replications must be at least 1");
        }
        if self.methods.is_empty() {
            bail!("no methods selected");
        }
        if self.m_values.is_empty() {
            bail!("m_values is empty");
        }
        let p = p.or(self.model.as_ref().map(|s| s.p));
        for &m in &self.m_values {
            if m == 0 || p.is_some_and(|p| m > p) {
                bail!("m = {m} outside 1..=p (p = {})", p.map_or("?".into(), |p| p.to_string()));
            }
        }
        self.deco.validate(p.unwrap_or(usize::MAX)).or_else(|e| match e {
            // m is swept separately; only the other fields matter here.
            deco_core::DecoError::InvalidM { .. } => Ok(()),
            e => Err(e),
        })?;
        Ok(())
    }

    pub fn rep_seed(&self, rep: usize) -> u64 {
        self.seed.wrapping_add(rep as u64)
    }
}

/// A commented example config, printed by `deco fit --example-config`.
pub const EXAMPLE: &str = r#"# Base seed; replication r uses seed + r.
seed = 1000
replications = 20
methods = ["deco3", "deco2", "lasso_refine", "lasso_full", "lasso_naive"]
# Partition counts to sweep. lasso_full and lasso_refine ignore m.
m_values = [10]
output = "results.csv"

[model]
kind = "compound_symmetry"   # independent | compound_symmetry | group | factor | l1_ball
n = 100
p = 1000
# rho = 0.6
# target_r2 = 0.9
# holdout = 100              # extra rows for prediction error

# Observed data instead of a model:
# [csv]
# path = "data.csv"
# response = "y"

[deco]
# r1 = 1.0                   # default: 1 with refinement, 10 without
# cv_folds = 5
# scale_columns = true
# mode = "gram_inv_sqrt"     # gram_inv_sqrt | svd_rows | identity
# lambda_rule = { rule = "ebic", gamma = 0.5 }
# lambda_rule = { rule = "theoretical", a = 2.0 }
# lambda_rule = { rule = "fixed", lambda = 0.1 }
"#;
