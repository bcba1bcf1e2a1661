//! Ridge refinement on the selected columns, with an optional lasso
//! sparsification pass when the merged support is too large for a ridge.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stages::{fit_worker, WorkerSettings};
use crate::error::{DecoError, Result};
use crate::linalg::{dot, mean, ridge_solve, Cholesky, Matrix};
use crate::rng::{Stage, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    /// The support reached `n`, so a lasso on the decorrelated selected
    /// columns shrank it first.
    pub sparsified: bool,
    /// Nothing was selected; the fit is the mean model.
    pub null_model: bool,
    pub r2: Option<f64>,
    pub support_before: usize,
    pub support_after: usize,
}

#[derive(Clone, Debug)]
pub struct Refined {
    /// Coefficients in raw column units.
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub report: RefineReport,
}

/// Inputs to the refinement stage, all in the master's possession after
/// the merge.
pub struct RefineInput<'a> {
    /// Stage-2 coefficients (only their support is used).
    pub beta: &'a [f64],
    /// Centered design, in raw column units.
    pub x_centered: &'a Matrix,
    pub col_means: &'a [f64],
    pub y_centered: &'a [f64],
    pub y_mean: f64,
    pub y_tilde: &'a [f64],
    /// Decorrelated columns for the support of `beta`, in support order.
    pub x_tilde_selected: &'a Matrix,
    pub worker: &'a WorkerSettings,
    pub r2_grid: &'a [f64],
    pub cv_folds: usize,
    pub seed: u64,
}

/// Default ridge grid: ten log-spaced values spanning `[1e-4, 1e2] · n`.
pub fn default_r2_grid(n: usize) -> Vec<f64> {
    let (lo, hi) = (1e-4f64.ln(), 1e2f64.ln());
    (0..10)
        .map(|k| n as f64 * (lo + (hi - lo) * k as f64 / 9.0).exp())
        .collect()
}

pub fn refine(input: &RefineInput<'_>) -> Result<Refined> {
    let n = input.y_centered.len();
    let p = input.beta.len();
    let mut support: Vec<usize> = (0..p).filter(|&j| input.beta[j] != 0.0).collect();
    let support_before = support.len();
    if input.x_tilde_selected.cols() != support_before {
        return Err(DecoError::DimensionMismatch(format!(
            "{} decorrelated columns for a support of {support_before}",
            input.x_tilde_selected.cols()
        )));
    }

    let mut sparsified = false;
    if support.len() >= n {
        let fit = fit_worker(input.y_tilde, input.x_tilde_selected, input.worker)?;
        support = support
            .iter()
            .zip(&fit.beta)
            .filter(|(_, &b)| b != 0.0)
            .map(|(&j, _)| j)
            .collect();
        sparsified = true;
    }

    if support.is_empty() {
        return Ok(Refined {
            beta: vec![0.0; p],
            intercept: input.y_mean,
            report: RefineReport {
                sparsified,
                null_model: true,
                r2: None,
                support_before,
                support_after: 0,
            },
        });
    }

    let xm = input.x_centered.select_columns(&support);
    let r2 = select_r2_by_cv(&xm, input.y_centered, input.r2_grid, input.cv_folds, input.seed)?;
    let coef = ridge_solve(&xm, input.y_centered, r2)?;
    let mut beta = vec![0.0; p];
    for (&j, c) in support.iter().zip(coef) {
        beta[j] = c;
    }
    let intercept = input.y_mean - dot(&beta, input.col_means);
    Ok(Refined {
        beta,
        intercept,
        report: RefineReport {
            sparsified,
            null_model: false,
            r2: Some(r2),
            support_before,
            support_after: support.len(),
        },
    })
}

/// Contiguous folds over a seeded shuffle of the sample indices.
pub fn cv_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(DecoError::InvalidArgument(format!("cannot split {n} samples into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    Stream::new(seed, Stage::Folds, 0).shuffle(&mut idx);
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    Ok((0..k)
        .map(|f| {
            let w = base + usize::from(f < extra);
            let fold = idx[start..start + w].to_vec();
            start += w;
            fold
        })
        .collect())
}

/// Ridge parameter with the smallest K-fold prediction error. Each training
/// fold is re-centered so the held-out rows never inform the intercept.
/// Ties keep the earlier grid entry.
pub fn select_r2_by_cv(x: &Matrix, y: &[f64], grid: &[f64], k: usize, seed: u64) -> Result<f64> {
    if grid.is_empty() {
        return Err(DecoError::InvalidArgument("empty r2 grid".into()));
    }
    if let Some(bad) = grid.iter().find(|&&r| !(r > 0.0)) {
        return Err(DecoError::InvalidArgument(format!("r2 must be > 0, got {bad}")));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let n = y.len();
    let folds = cv_folds(n, k, seed)?;
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|test| fold_errors(x, y, test, grid))
        .collect::<Result<_>>()?;
    let mut best = 0;
    let mut best_err = f64::INFINITY;
    for g in 0..grid.len() {
        let err: f64 = per_fold.iter().map(|e| e[g]).sum();
        if err < best_err {
            best = g;
            best_err = err;
        }
    }
    Ok(grid[best])
}

fn fold_errors(x: &Matrix, y: &[f64], test: &[usize], grid: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    let mut in_test = vec![false; n];
    test.iter().for_each(|&i| in_test[i] = true);
    let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();

    let mut xtr = x.select_rows(&train);
    let mut ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let xbar: Vec<f64> = xtr.columns().map(mean).collect();
    let ybar = mean(&ytr);
    for (j, &m) in xbar.iter().enumerate() {
        xtr.col_mut(j).iter_mut().for_each(|v| *v -= m);
    }
    ytr.iter_mut().for_each(|v| *v -= ybar);

    let gram = xtr.col_gram();
    let xty = xtr.t_matvec(&ytr)?;
    grid.iter()
        .map(|&r2| {
            let mut g = gram.clone();
            g.add_diag(r2);
            let b = Cholesky::new(&g)?.solve(&xty);
            Ok(test
                .iter()
                .map(|&i| {
                    let pred = ybar
                        + (0..x.cols())
                            .map(|j| (x.get(i, j) - xbar[j]) * b[j])
                            .sum::<f64>();
                    (y[i] - pred).powi(2)
                })
                .sum())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_samples() {
        let folds = cv_folds(23, 5, 4).unwrap();
        assert_eq!(folds.len(), 5);
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert_eq!(folds, cv_folds(23, 5, 4).unwrap());
        assert!(cv_folds(3, 5, 0).is_err());
    }

    #[test]
    fn default_grid_spans_range() {
        let g = default_r2_grid(100);
        assert_eq!(g.len(), 10);
        assert!((g[0] - 1e-2).abs() < 1e-12);
        assert!((g[9] - 1e4).abs() < 1e-6);
    }

    #[test]
    fn cv_prefers_small_ridge_on_clean_signal() {
        let x = Matrix::from_fn(40, 2, |i, j| ((i * (j + 3)) % 7) as f64 - 3.0);
        let y: Vec<f64> = (0..40).map(|i| 2.0 * x.get(i, 0) - x.get(i, 1)).collect();
        let r2 = select_r2_by_cv(&x, &y, &[1e-6, 1.0, 1e3], 5, 1).unwrap();
        assert_eq!(r2, 1e-6);
    }
}
