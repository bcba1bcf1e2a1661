//! Synthetic regression designs with noise calibrated to a target R².

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DecoError, Result};
use crate::linalg::{sample_variance, Matrix};
use crate::rng::{Stage, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Model (i): independent standard normal predictors.
    #[serde(alias = "i")]
    Independent,
    /// Model (ii): all pairs equally correlated with `rho`.
    #[serde(alias = "ii")]
    CompoundSymmetry,
    /// Model (iii): 15 true predictors built from three latent variables.
    #[serde(alias = "iii")]
    Group,
    /// Model (iv): `n_factors` latent factors plus idiosyncratic noise.
    #[serde(alias = "iv")]
    Factor,
    /// Model (v): compound symmetry with Dirichlet coefficients, ‖β‖₁ = 10.
    #[serde(alias = "v")]
    L1Ball,
}

impl ModelKind {
    pub fn is_exactly_sparse(self) -> bool {
        !matches!(self, ModelKind::L1Ball)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = DecoError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "independent" | "i" => ModelKind::Independent,
            "compound_symmetry" | "ii" => ModelKind::CompoundSymmetry,
            "group" | "iii" => ModelKind::Group,
            "factor" | "iv" => ModelKind::Factor,
            "l1_ball" | "v" => ModelKind::L1Ball,
            other => return Err(DecoError::InvalidSpec(format!("unknown model kind `{other}`"))),
        })
    }
}

pub const SPARSE_SUPPORT: usize = 5;
pub const GROUP_SUPPORT: usize = 15;
pub const L1_BALL_RADIUS: f64 = 10.0;

fn default_rho() -> f64 {
    0.6
}
fn default_factors() -> usize {
    5
}
fn default_group_sd() -> f64 {
    0.1
}
fn default_r2() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_factors")]
    pub n_factors: usize,
    #[serde(default = "default_group_sd")]
    pub group_noise_sd: f64,
    #[serde(default = "default_r2")]
    pub target_r2: f64,
    #[serde(default)]
    pub seed: u64,
    /// Extra rows drawn from the same model and kept aside for prediction
    /// error. They never influence the coefficients or the noise level.
    #[serde(default)]
    pub holdout: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, n: usize, p: usize, seed: u64) -> Self {
        ModelSpec {
            kind,
            n,
            p,
            rho: default_rho(),
            n_factors: default_factors(),
            group_noise_sd: default_group_sd(),
            target_r2: default_r2(),
            seed,
            holdout: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DecoError::InvalidSpec(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.p == 0 {
            return bad("p must be positive".into());
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(self.target_r2 > 0.0 && self.target_r2 < 1.0) {
            return bad(format!("target_r2 must lie in (0, 1), got {}", self.target_r2));
        }
        match self.kind {
            ModelKind::Group if self.p < GROUP_SUPPORT => {
                bad(format!("group model needs p >= {GROUP_SUPPORT}, got {}", self.p))
            }
            ModelKind::Independent | ModelKind::CompoundSymmetry | ModelKind::Factor
                if self.p < SPARSE_SUPPORT =>
            {
                bad(format!("sparse models need p >= {SPARSE_SUPPORT}, got {}", self.p))
            }
            ModelKind::Factor if self.n_factors == 0 => bad("n_factors must be positive".into()),
            ModelKind::Group if !(self.group_noise_sd >= 0.0) => {
                bad("group_noise_sd must be non-negative".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeldOut {
    pub x: Matrix,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub beta_true: Option<Vec<f64>>,
    /// Noise standard deviation used to generate `y`.
    pub sigma: f64,
    pub support: Option<Vec<usize>>,
    pub holdout: Option<HeldOut>,
}

impl Dataset {
    /// A dataset without known truth, e.g. one read from disk.
    pub fn observed(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(DecoError::DimensionMismatch(format!(
                "{} responses for {} rows",
                y.len(),
                x.rows()
            )));
        }
        Ok(Dataset {
            x,
            y,
            beta_true: None,
            sigma: f64::NAN,
            support: None,
            holdout: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    /// `y - Xβ*` when the truth is known.
    pub fn noise(&self) -> Option<Vec<f64>> {
        let beta = self.beta_true.as_ref()?;
        let fit = self.x.matvec(beta).ok()?;
        Some(self.y.iter().zip(fit).map(|(y, f)| y - f).collect())
    }
}

/// Noise standard deviation giving `var(Xβ) / var(y) = target_r2` in
/// expectation: `σ² = var(Xβ) (1 - r²) / r²`.
pub fn calibrate_noise(signal: &[f64], target_r2: f64) -> Result<f64> {
    if !(target_r2 > 0.0 && target_r2 < 1.0) {
        return Err(DecoError::InvalidSpec(format!(
            "target_r2 must lie in (0, 1), got {target_r2}"
        )));
    }
    let v = sample_variance(signal);
    if !(v > 0.0) {
        return Err(DecoError::DegenerateSignal);
    }
    Ok((v * (1.0 - target_r2) / target_r2).sqrt())
}

fn design_columns(spec: &ModelSpec, rows: usize) -> Vec<Vec<f64>> {
    let seed = spec.seed;
    let column = |j: usize| Stream::new(seed, Stage::Column, j as u64);
    match spec.kind {
        ModelKind::Independent => (0..spec.p).map(|j| column(j).normals(rows)).collect(),
        ModelKind::CompoundSymmetry | ModelKind::L1Ball => {
            let common = Stream::new(seed, Stage::Latent, 0).normals(rows);
            let (a, b) = (spec.rho.sqrt(), (1.0 - spec.rho).sqrt());
            (0..spec.p)
                .map(|j| {
                    let mut s = column(j);
                    common.iter().map(|z0| a * z0 + b * s.normal()).collect()
                })
                .collect()
        }
        ModelKind::Group => {
            let latent: Vec<Vec<f64>> = (0..3)
                .map(|k| Stream::new(seed, Stage::Latent, k).normals(rows))
                .collect();
            (0..spec.p)
                .map(|j| {
                    let mut s = column(j);
                    if j < GROUP_SUPPORT {
                        latent[j % 3]
                            .iter()
                            .map(|z| z + spec.group_noise_sd * s.normal())
                            .collect()
                    } else {
                        s.normals(rows)
                    }
                })
                .collect()
        }
        ModelKind::Factor => {
            let factors: Vec<Vec<f64>> = (0..spec.n_factors)
                .map(|k| Stream::new(seed, Stage::Latent, k as u64).normals(rows))
                .collect();
            (0..spec.p)
                .map(|j| {
                    let mut s = column(j);
                    let loadings = s.normals(spec.n_factors);
                    (0..rows)
                        .map(|i| {
                            let common: f64 =
                                factors.iter().zip(&loadings).map(|(f, l)| f[i] * l).sum();
                            common + s.normal()
                        })
                        .collect()
                })
                .collect()
        }
    }
}

fn coefficients(spec: &ModelSpec) -> Vec<f64> {
    let mut beta = vec![0.0; spec.p];
    let mut s = Stream::new(spec.seed, Stage::Coefficients, 0);
    match spec.kind {
        ModelKind::Independent | ModelKind::CompoundSymmetry | ModelKind::Factor => {
            let floor = 5.0 * ((spec.p as f64).ln() / spec.n as f64).sqrt();
            for b in beta.iter_mut().take(SPARSE_SUPPORT) {
                let negative = s.bernoulli(0.5);
                let magnitude = s.normal().abs() + floor;
                *b = if negative { -magnitude } else { magnitude };
            }
        }
        ModelKind::Group => beta[..GROUP_SUPPORT].iter_mut().for_each(|b| *b = 3.0),
        ModelKind::L1Ball => {
            // Dirichlet(1/p, ..., 1/p) as normalized gammas, in log space.
            let shape = 1.0 / spec.p as f64;
            let logs: Vec<f64> = (0..spec.p).map(|_| s.ln_gamma_variate(shape)).collect();
            let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = w.iter().sum();
            for (b, wi) in beta.iter_mut().zip(w) {
                *b = L1_BALL_RADIUS * wi / total;
            }
        }
    }
    beta
}

/// Draws a dataset from one of the five synthetic models.
pub fn generate(spec: &ModelSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    let rows = n + spec.holdout;
    let columns = design_columns(spec, rows);
    let beta = coefficients(spec);

    let full = Matrix::from_columns(rows, &columns)?;
    let signal = full.matvec(&beta)?;
    let sigma = calibrate_noise(&signal[..n], spec.target_r2)?;
    let mut noise = Stream::new(spec.seed, Stage::Noise, 0);
    let y_all: Vec<f64> = signal.iter().map(|s| s + sigma * noise.normal()).collect();

    let train_idx: Vec<usize> = (0..n).collect();
    let x = if spec.holdout == 0 {
        full.clone()
    } else {
        full.select_rows(&train_idx)
    };
    let holdout = (spec.holdout > 0).then(|| {
        let idx: Vec<usize> = (n..rows).collect();
        HeldOut {
            x: full.select_rows(&idx),
            y: y_all[n..].to_vec(),
        }
    });
    let support = spec
        .kind
        .is_exactly_sparse()
        .then(|| (0..p).filter(|&j| beta[j] != 0.0).collect());

    Ok(Dataset {
        x,
        y: y_all[..n].to_vec(),
        beta_true: Some(beta),
        sigma,
        support,
        holdout,
    })
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_real(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Writes `y,x1,...,xp` with one sample per line.
pub fn write_csv<W: Write>(dataset: &Dataset, mut out: W) -> io::Result<()> {
    let mut header = String::from("y");
    for j in 1..=dataset.p() {
        write!(header, ",x{j}").unwrap();
    }
    writeln!(out, "{header}")?;
    let mut line = String::new();
    for i in 0..dataset.n() {
        line.clear();
        line.push_str(&format_real(dataset.y[i]));
        for j in 0..dataset.p() {
            line.push(',');
            line.push_str(&format_real(dataset.x.get(i, j)));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn export_csv(dataset: &Dataset, path: &Path) -> io::Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = io::BufWriter::new(f);
    write_csv(dataset, &mut w)?;
    w.flush()
}
