//! Dataset generation, CSV ingestion and the `gen` sidecar.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use deco_core::datagen::{export_csv, generate, Dataset, HeldOut, ModelSpec};
use deco_core::linalg::Matrix;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// Reads a headed CSV. The column named `response` becomes `y`; every
/// other column becomes a predictor, in file order. Any cell that does not
/// parse as a finite number is an error.
pub fn load_csv(path: &Path, response: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = reader
        .headers()
        .with_context(|| format!("reading header of {}", path.display()))?
        .clone();
    let y_col = headers
        .iter()
        .position(|h| h.trim() == response)
        .ok_or_else(|| anyhow!("{}: no column named `{response}`", path.display()))?;
    let p = headers.len() - 1;
    if p == 0 {
        bail!("{}: no predictor columns", path.display());
    }

    let mut y = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); p];
    for (row, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: data row {}", path.display(), row + 1))?;
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                anyhow!(
                    "{}: data row {}, column `{}`: `{cell}` is not a finite number",
                    path.display(),
                    row + 1,
                    &headers[col]
                )
            })?;
            match col.cmp(&y_col) {
                std::cmp::Ordering::Equal => y.push(v),
                std::cmp::Ordering::Less => columns[col].push(v),
                std::cmp::Ordering::Greater => columns[col - 1].push(v),
            }
        }
    }
    if y.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let x = Matrix::from_columns(y.len(), &columns)?;
    Ok(Dataset::observed(x, y)?)
}

/// Moves the last `k` rows of an observed dataset into its hold-out set.
pub fn split_tail(data: Dataset, k: usize) -> Result<Dataset> {
    if k == 0 {
        return Ok(data);
    }
    let n = data.n();
    if k + 2 > n {
        bail!("cannot hold out {k} of {n} rows");
    }
    let train: Vec<usize> = (0..n - k).collect();
    let test: Vec<usize> = (n - k..n).collect();
    let mut out = Dataset::observed(data.x.select_rows(&train), data.y[..n - k].to_vec())?;
    out.holdout = Some(HeldOut {
        x: data.x.select_rows(&test),
        y: data.y[n - k..].to_vec(),
    });
    Ok(out)
}

/// The training data for one replication.
pub fn replication_data(cfg: &ExperimentConfig, rep: usize, observed: Option<&Dataset>) -> Result<Dataset> {
    match (&cfg.model, observed) {
        (Some(spec), _) => Ok(generate(&ModelSpec {
            seed: cfg.rep_seed(rep),
            ..spec.clone()
        })?),
        (None, Some(d)) => Ok(d.clone()),
        (None, None) => bail!("no data source"),
    }
}

/// Reads the configured CSV once, if there is one.
pub fn observed_data(cfg: &ExperimentConfig) -> Result<Option<Dataset>> {
    match &cfg.csv {
        Some(src) => Ok(Some(split_tail(load_csv(&src.path, &src.response)?, cfg.holdout)?)),
        None => Ok(None),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: ModelSpec,
    pub seed: u64,
    pub sigma: f64,
    pub beta_true: Vec<f64>,
}

/// Path of the JSON written next to a generated CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes the dataset for `spec` and its sidecar; returns the sidecar path.
pub fn write_generated(spec: &ModelSpec, out: &Path) -> Result<PathBuf> {
    let data = generate(spec)?;
    export_csv(&data, out).with_context(|| format!("writing {}", out.display()))?;
    let sidecar = Sidecar {
        spec: spec.clone(),
        seed: spec.seed,
        sigma: data.sigma,
        beta_true: data.beta_true.clone().unwrap_or_default(),
    };
    let side = sidecar_path(out);
    std::fs::write(&side, serde_json::to_string_pretty(&sidecar)? + "\n")
        .with_context(|| format!("writing {}", side.display()))?;
    Ok(side)
}
