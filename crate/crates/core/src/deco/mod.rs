//! The three-stage pipeline: decorrelate on the master, fit column blocks
//! independently, merge and optionally refine.
//!
//! Workers are simulated with a rayon pool. A worker only ever sees its own
//! decorrelated block, the shared decorrelated response and a
//! [`WorkerSettings`]; every floating-point reduction that feeds the result
//! runs in a fixed order, so results do not depend on the thread count.

mod partition;
mod refine;
mod stages;

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use partition::{partition_columns, Partition};
pub use refine::{cv_folds, default_r2_grid, refine, select_r2_by_cv, RefineInput, RefineReport, Refined};
pub use stages::{accumulate_gram, decorrelate, fit_worker, merge, WorkerFit, WorkerReport, WorkerSettings};

use crate::datagen::Dataset;
use crate::error::{DecoError, Result};
use crate::lasso::PathOptions;
use crate::linalg::{
    center_scale, sample_variance, scaled_inv_sqrt_rows, spd_inv_sqrt_from_eig, sym_eig, Matrix, Standardized,
};
use stages::timed;

/// How each worker picks its λ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaRule {
    /// Path plus extended BIC, run independently on every worker.
    Ebic { gamma: f64 },
    /// `λ = A σ₀ √(ln p / n)` with `σ₀` the standard deviation of `y`.
    Theoretical { a: f64 },
    /// One λ shared by all workers.
    Fixed { lambda: f64 },
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Ebic { gamma: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecorrelationMode {
    /// `√p (XXᵀ + r₁I)^(-1/2)`.
    #[default]
    GramInvSqrt,
    /// `√p (Λ + r₁I)^(-1/2) Uᵀ` from the same eigendecomposition.
    SvdRows,
    /// No decorrelation; the naive partitioned lasso.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoConfig {
    pub m: usize,
    /// Ridge added to `XXᵀ` before the inverse square root. Defaults to 1
    /// with refinement and 10 without.
    pub r1: Option<f64>,
    /// Candidate ridge penalties for refinement; defaults to
    /// [`default_r2_grid`].
    pub r2_grid: Option<Vec<f64>>,
    pub cv_folds: usize,
    pub lambda_rule: LambdaRule,
    pub refine: bool,
    pub scale_columns: bool,
    pub seed: u64,
    pub mode: DecorrelationMode,
    pub n_lambda: usize,
    pub lambda_ratio: f64,
}

impl Default for DecoConfig {
    fn default() -> Self {
        DecoConfig {
            m: 1,
            r1: None,
            r2_grid: None,
            cv_folds: 5,
            lambda_rule: LambdaRule::default(),
            refine: false,
            scale_columns: true,
            seed: 0,
            mode: DecorrelationMode::default(),
            n_lambda: 100,
            lambda_ratio: 1e-3,
        }
    }
}

impl DecoConfig {
    pub fn effective_r1(&self) -> f64 {
        self.r1.unwrap_or(if self.refine { 1.0 } else { 10.0 })
    }

    pub fn r2_grid_for(&self, n: usize) -> Vec<f64> {
        self.r2_grid.clone().unwrap_or_else(|| default_r2_grid(n))
    }

    pub fn path_options(&self) -> PathOptions {
        PathOptions {
            n_lambda: self.n_lambda,
            ratio: self.lambda_ratio,
            ..PathOptions::default()
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.m == 0 || self.m > p {
            return Err(DecoError::InvalidM { m: self.m, p });
        }
        if let Some(r1) = self.r1 {
            if !(r1 >= 0.0) {
                return Err(DecoError::InvalidArgument(format!("r1 must be >= 0, got {r1}")));
            }
        }
        if self.cv_folds < 2 {
            return Err(DecoError::InvalidArgument(format!(
                "cv_folds must be >= 2, got {}",
                self.cv_folds
            )));
        }
        match self.lambda_rule {
            LambdaRule::Ebic { gamma } if !(gamma >= 0.0) => {
                Err(DecoError::InvalidArgument(format!("EBIC gamma must be >= 0, got {gamma}")))
            }
            LambdaRule::Theoretical { a } if !(a > 0.0) => {
                Err(DecoError::InvalidArgument(format!("A must be > 0, got {a}")))
            }
            LambdaRule::Fixed { lambda } if !(lambda >= 0.0) => {
                Err(DecoError::InvalidArgument(format!("lambda must be >= 0, got {lambda}")))
            }
            _ => Ok(()),
        }
    }
}

pub(crate) mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1e3)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(ms.max(0.0) / 1e3))
    }
}

/// Wall-clock time per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    #[serde(with = "millis")]
    pub gram: Duration,
    #[serde(with = "millis")]
    pub eig: Duration,
    #[serde(with = "millis")]
    pub decorrelate: Duration,
    #[serde(with = "millis")]
    pub worker_fit: Duration,
    #[serde(with = "millis")]
    pub merge: Duration,
    #[serde(with = "millis")]
    pub refine: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub support: Vec<usize>,
    #[serde(rename = "stage_times_ms")]
    pub stage_times: StageTimes,
    pub worker_reports: Vec<WorkerReport>,
    #[serde(skip)]
    pub refine_report: Option<RefineReport>,
    #[serde(skip)]
    pub partition: Option<Partition>,
}

impl FitResult {
    /// Runtime as a parallel deployment would see it: master-side
    /// preprocessing, the slowest worker, then merge and refinement.
    pub fn runtime(&self) -> Duration {
        let slowest = self
            .worker_reports
            .iter()
            .map(|w| w.elapsed)
            .max()
            .unwrap_or_default();
        let t = &self.stage_times;
        t.gram + t.eig + slowest + t.merge + t.refine
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(x.matvec(&self.beta)?.into_iter().map(|v| v + self.intercept).collect())
    }
}

fn support_of(beta: &[f64]) -> Vec<usize> {
    (0..beta.len()).filter(|&j| beta[j] != 0.0).collect()
}

/// Stage-1 output kept by the master.
pub struct Decorrelated {
    pub standardized: Standardized,
    pub partition: Partition,
    pub y_tilde: Vec<f64>,
    /// `F̄`, absent in identity mode.
    pub transform: Option<Matrix>,
    /// Decorrelated blocks, one per group, with their wall times.
    pub blocks: Vec<(Matrix, Duration)>,
    pub times: StageTimes,
}

/// Stage 1 on its own: standardize, partition, accumulate the Gram matrix,
/// build the transform and apply it to every block.
pub fn decorrelate_stage(dataset: &Dataset, config: &DecoConfig) -> Result<Decorrelated> {
    let p = dataset.p();
    config.validate(p)?;
    let (standardized, t_std) = timed(|| center_scale(&dataset.x, &dataset.y, config.scale_columns));
    let standardized = standardized.map_err(DecoError::in_stage("standardize"))?;
    let partition = partition_columns(p, config.m, config.seed).map_err(DecoError::in_stage("partition"))?;
    let blocks: Vec<Matrix> = partition
        .groups()
        .par_iter()
        .map(|g| standardized.x.select_columns(g))
        .collect();

    let mut times = StageTimes::default();
    let transform = match config.mode {
        DecorrelationMode::Identity => {
            times.gram = t_std;
            None
        }
        mode => {
            let (f, t_gram) = timed(|| accumulate_gram(&blocks));
            let f = f.map_err(DecoError::in_stage("gram"))?;
            times.gram = t_std + t_gram;
            let r1 = config.effective_r1();
            let (t, t_eig) = timed(|| {
                let eig = sym_eig(&f)?;
                match mode {
                    DecorrelationMode::SvdRows => scaled_inv_sqrt_rows(&eig, r1, p),
                    _ => spd_inv_sqrt_from_eig(&eig, r1, p),
                }
            });
            times.eig = t_eig;
            Some(t.map_err(DecoError::in_stage("eig"))?)
        }
    };

    let (decorrelated, t_dec) = timed(|| -> Result<(Vec<f64>, Vec<(Matrix, Duration)>)> {
        match &transform {
            None => Ok((
                standardized.y.clone(),
                blocks.into_iter().map(|b| (b, Duration::ZERO)).collect(),
            )),
            Some(t) => {
                let y_tilde = t.matvec(&standardized.y)?;
                let blocks = blocks
                    .par_iter()
                    .map(|b| {
                        let (xt, el) = timed(|| t.matmul(b));
                        xt.map(|xt| (xt, el))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((y_tilde, blocks))
            }
        }
    });
    let (y_tilde, blocks) = decorrelated.map_err(DecoError::in_stage("decorrelate"))?;
    times.decorrelate = t_dec;
    Ok(Decorrelated {
        standardized,
        partition,
        y_tilde,
        transform,
        blocks,
        times,
    })
}

/// All three stages end to end.
pub fn run_deco(dataset: &Dataset, config: &DecoConfig) -> Result<FitResult> {
    let n = dataset.n();
    let p = dataset.p();
    let Decorrelated {
        standardized,
        partition,
        y_tilde,
        blocks,
        mut times,
        ..
    } = decorrelate_stage(dataset, config)?;

    let settings = WorkerSettings {
        rule: config.lambda_rule,
        p_total: p,
        sigma0: sample_variance(&dataset.y).sqrt(),
        path: config.path_options(),
    };

    let (fits, t_fit) = timed(|| {
        blocks
            .par_iter()
            .enumerate()
            .map(|(id, (block, t_dec))| {
                let (fit, t) = timed(|| fit_worker(&y_tilde, block, &settings));
                let fit = fit.map_err(DecoError::in_worker(id))?;
                let report = WorkerReport {
                    worker: id,
                    n_columns: block.cols(),
                    lambda: fit.lambda,
                    support_size: fit.beta.iter().filter(|&&b| b != 0.0).count(),
                    kkt_max_violation: fit.kkt_max_violation,
                    elapsed: *t_dec + t,
                };
                Ok((fit, report))
            })
            .collect::<Result<Vec<_>>>()
    });
    let fits = fits.map_err(DecoError::in_stage("worker_fit"))?;
    times.worker_fit = t_fit;

    let (merged, t_merge) = timed(|| {
        let vectors: Vec<Vec<f64>> = fits.iter().map(|(f, _)| f.beta.clone()).collect();
        merge(
            &vectors,
            &partition,
            &standardized.col_means,
            &standardized.col_scales,
            standardized.y_mean,
        )
    });
    let (mut beta, mut intercept) = merged.map_err(DecoError::in_stage("merge"))?;
    times.merge = t_merge;

    let mut refine_report = None;
    if config.refine {
        let (refined, t_refine) = timed(|| -> Result<Refined> {
            // Master gathers the selected decorrelated columns in column order.
            let mut selected: Vec<(usize, &[f64])> = Vec::new();
            for ((cols, (block, _)), (fit, _)) in partition.groups().iter().zip(&blocks).zip(&fits) {
                for (k, &j) in cols.iter().enumerate() {
                    if fit.beta[k] != 0.0 {
                        selected.push((j, block.col(k)));
                    }
                }
            }
            selected.sort_by_key(|&(j, _)| j);
            let cols: Vec<Vec<f64>> = selected.iter().map(|(_, c)| c.to_vec()).collect();
            let x_tilde_selected = Matrix::from_columns(n, &cols)?;
            let mut x_centered = standardized.x.clone();
            for (j, &s) in standardized.col_scales.iter().enumerate() {
                if s != 1.0 {
                    x_centered.col_mut(j).iter_mut().for_each(|v| *v *= s);
                }
            }
            refine(&RefineInput {
                beta: &beta,
                x_centered: &x_centered,
                col_means: &standardized.col_means,
                y_centered: &standardized.y,
                y_mean: standardized.y_mean,
                y_tilde: &y_tilde,
                x_tilde_selected: &x_tilde_selected,
                worker: &settings,
                r2_grid: &config.r2_grid_for(n),
                cv_folds: config.cv_folds,
                seed: config.seed,
            })
        });
        let refined = refined.map_err(DecoError::in_stage("refine"))?;
        times.refine = t_refine;
        beta = refined.beta;
        intercept = refined.intercept;
        refine_report = Some(refined.report);
    }

    Ok(FitResult {
        support: support_of(&beta),
        beta,
        intercept,
        stage_times: times,
        worker_reports: fits.into_iter().map(|(_, r)| r).collect(),
        refine_report,
        partition: Some(partition),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Path plus EBIC on the full standardized data.
    LassoFull,
    /// `LassoFull` followed by a cross-validated ridge refit on its support.
    LassoRefine,
    /// The partitioned pipeline with decorrelation replaced by the identity.
    LassoNaive,
}

pub fn run_baseline(dataset: &Dataset, which: Baseline, config: &DecoConfig) -> Result<FitResult> {
    let mut cfg = config.clone();
    cfg.mode = DecorrelationMode::Identity;
    match which {
        Baseline::LassoFull => {
            cfg.m = 1;
            cfg.refine = false;
        }
        Baseline::LassoRefine => {
            cfg.m = 1;
            cfg.refine = true;
        }
        Baseline::LassoNaive => cfg.refine = false,
    }
    run_deco(dataset, &cfg)
}

/// Every estimator compared by the experiment harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Deco2,
    Deco3,
    LassoFull,
    LassoRefine,
    LassoNaive,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Deco3,
        Method::Deco2,
        Method::LassoRefine,
        Method::LassoFull,
        Method::LassoNaive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Deco2 => "deco2",
            Method::Deco3 => "deco3",
            Method::LassoFull => "lasso_full",
            Method::LassoRefine => "lasso_refine",
            Method::LassoNaive => "lasso_naive",
        }
    }

    /// Whether the partition count changes the estimator.
    pub fn uses_partition(self) -> bool {
        !matches!(self, Method::LassoFull | Method::LassoRefine)
    }

    pub fn run(self, dataset: &Dataset, config: &DecoConfig) -> Result<FitResult> {
        match self {
            Method::Deco2 => run_deco(dataset, &DecoConfig { refine: false, ..config.clone() }),
            Method::Deco3 => run_deco(dataset, &DecoConfig { refine: true, ..config.clone() }),
            Method::LassoFull => run_baseline(dataset, Baseline::LassoFull, config),
            Method::LassoRefine => run_baseline(dataset, Baseline::LassoRefine, config),
            Method::LassoNaive => run_baseline(dataset, Baseline::LassoNaive, config),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = DecoError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| DecoError::InvalidArgument(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
