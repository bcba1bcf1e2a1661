use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LambdaRule, Partition};
use crate::error::{DecoError, Result};
use crate::lasso::{ebic_select, fit_path, kkt_check, CdSolver, PathOptions};
use crate::linalg::Matrix;

/// `Σᵢ X⁽ⁱ⁾X⁽ⁱ⁾ᵀ`. Blocks are reduced in parallel and the partial Grams
/// summed in ascending block order, so the result is independent of the
/// thread count.
pub fn accumulate_gram(blocks: &[Matrix]) -> Result<Matrix> {
    let n = blocks
        .first()
        .ok_or_else(|| DecoError::DimensionMismatch("no column blocks".into()))?
        .rows();
    if let Some(b) = blocks.iter().find(|b| b.rows() != n) {
        return Err(DecoError::DimensionMismatch(format!(
            "block with {} rows, expected {n}",
            b.rows()
        )));
    }
    let partials: Vec<Matrix> = blocks.par_iter().map(Matrix::row_gram).collect();
    let mut f = Matrix::zeros(n, n);
    for g in &partials {
        f.add_assign(g)?;
    }
    Ok(f)
}

/// `(F̄y, F̄X⁽ⁱ⁾)`.
pub fn decorrelate(fbar: &Matrix, block: &Matrix, y: &[f64]) -> Result<(Vec<f64>, Matrix)> {
    if !fbar.is_square() || fbar.cols() != block.rows() || fbar.cols() != y.len() {
        return Err(DecoError::DimensionMismatch(format!(
            "transform {:?}, block {:?}, response {}",
            fbar.shape(),
            block.shape(),
            y.len()
        )));
    }
    Ok((fbar.matvec(y)?, fbar.matmul(block)?))
}

/// Everything a worker needs besides its block and the shared response.
#[derive(Clone, Debug)]
pub struct WorkerSettings {
    pub rule: LambdaRule,
    /// Dimension of the full problem, used in the EBIC penalty and in the
    /// theoretical λ.
    pub p_total: usize,
    /// Standard deviation of the raw response.
    pub sigma0: f64,
    pub path: PathOptions,
}

impl WorkerSettings {
    /// λ under the theoretical rule, `A σ₀ √(ln p / n)`.
    pub fn theoretical_lambda(&self, a: f64, n: usize) -> f64 {
        a * self.sigma0 * ((self.p_total as f64).ln() / n as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerReport {
    pub worker: usize,
    pub n_columns: usize,
    pub lambda: f64,
    pub support_size: usize,
    pub kkt_max_violation: f64,
    /// Decorrelation plus fitting time on this worker.
    #[serde(with = "super::millis")]
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct WorkerFit {
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub kkt_max_violation: f64,
}

/// Fits one block: full path plus EBIC, or a single λ under the
/// theoretical and fixed rules.
pub fn fit_worker(y_tilde: &[f64], block_tilde: &Matrix, settings: &WorkerSettings) -> Result<WorkerFit> {
    let (n, q) = block_tilde.shape();
    if q == 0 {
        return Err(DecoError::InvalidArgument("empty block".into()));
    }
    let (beta, lambda) = match settings.rule {
        LambdaRule::Ebic { gamma } => match fit_path(block_tilde, y_tilde, &settings.path) {
            Ok(path) => {
                let k = ebic_select(&path, n, settings.p_total, gamma)?;
                let lambda = path.lambdas[k];
                let solver = CdSolver::new(block_tilde, y_tilde, settings.path.polish)?;
                (solver.solve(lambda, Some(&path.betas[k]))?, lambda)
            }
            // Xᵀy = 0: zero is optimal at every λ.
            Err(DecoError::DegenerateResponse) => (vec![0.0; q], 0.0),
            Err(e) => return Err(e),
        },
        LambdaRule::Theoretical { a } => {
            let lambda = settings.theoretical_lambda(a, n);
            (solve_fixed(block_tilde, y_tilde, lambda, &settings.path)?, lambda)
        }
        LambdaRule::Fixed { lambda } => (solve_fixed(block_tilde, y_tilde, lambda, &settings.path)?, lambda),
    };
    let kkt = kkt_check(block_tilde, y_tilde, &beta, lambda, f64::INFINITY);
    Ok(WorkerFit {
        beta,
        lambda,
        kkt_max_violation: kkt.max_violation,
    })
}

fn solve_fixed(x: &Matrix, y: &[f64], lambda: f64, path: &PathOptions) -> Result<Vec<f64>> {
    CdSolver::new(x, y, path.polish)?.solve(lambda, None)
}

/// Scatters worker coefficients back to their columns, undoes column
/// scaling and recovers the intercept `ȳ − x̄ᵀβ`.
pub fn merge(
    workers: &[Vec<f64>],
    partition: &Partition,
    col_means: &[f64],
    col_scales: &[f64],
    y_mean: f64,
) -> Result<(Vec<f64>, f64)> {
    let p = partition.p();
    if workers.len() != partition.m() {
        return Err(DecoError::CoverageGap(format!(
            "{} worker vectors for {} groups",
            workers.len(),
            partition.m()
        )));
    }
    if col_means.len() != p || col_scales.len() != p {
        return Err(DecoError::DimensionMismatch(format!(
            "{} means and {} scales for p={p}",
            col_means.len(),
            col_scales.len()
        )));
    }
    let mut beta = vec![0.0; p];
    for (g, (cols, w)) in partition.groups().iter().zip(workers).enumerate() {
        if cols.len() != w.len() {
            return Err(DecoError::CoverageGap(format!(
                "worker {g} returned {} coefficients for {} columns",
                w.len(),
                cols.len()
            )));
        }
        for (&j, &b) in cols.iter().zip(w) {
            beta[j] = b / col_scales[j];
        }
    }
    let intercept = y_mean - beta.iter().zip(col_means).map(|(b, m)| b * m).sum::<f64>();
    Ok((beta, intercept))
}

pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deco::partition_columns;
    use crate::rng::{Stage, Stream};

    fn gaussian(n: usize, q: usize, seed: u64) -> Matrix {
        let mut s = Stream::new(seed, Stage::Misc, 0);
        Matrix::from_fn(n, q, |_, _| s.normal())
    }

    #[test]
    fn gram_single_block() {
        let x = gaussian(6, 9, 1);
        assert_eq!(accumulate_gram(&[x.clone()]).unwrap(), x.row_gram());
    }

    #[test]
    fn gram_two_blocks_match_one_shot() {
        let x = gaussian(8, 20, 2);
        let left = x.select_columns(&(0..7).collect::<Vec<_>>());
        let right = x.select_columns(&(7..20).collect::<Vec<_>>());
        let f = accumulate_gram(&[left, right]).unwrap();
        let one = x.row_gram();
        assert!(f.max_abs_diff(&one) <= 1e-10 * one.max_abs());
    }

    #[test]
    fn gram_rejects_ragged_blocks() {
        assert!(accumulate_gram(&[gaussian(3, 2, 1), gaussian(4, 2, 1)]).is_err());
        assert!(accumulate_gram(&[]).is_err());
    }

    #[test]
    fn identity_transform_is_noop() {
        let x = gaussian(5, 3, 3);
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let (yt, xt) = decorrelate(&Matrix::identity(5), &x, &y).unwrap();
        assert_eq!(yt, y);
        assert_eq!(xt, x);
        assert!(decorrelate(&Matrix::identity(4), &x, &y).is_err());
    }

    #[test]
    fn merge_scatters_and_unscales() {
        let part = Partition::new(4, vec![vec![1, 3], vec![0, 2]]).unwrap();
        let (beta, b0) = merge(
            &[vec![2.0, 0.0], vec![0.0, 6.0]],
            &part,
            &[1.0, 1.0, 1.0, 1.0],
            &[1.0, 2.0, 3.0, 1.0],
            10.0,
        )
        .unwrap();
        assert_eq!(beta, vec![0.0, 1.0, 2.0, 0.0]);
        assert_eq!(b0, 7.0);
    }

    #[test]
    fn merge_zero_workers_gives_mean() {
        let part = partition_columns(6, 2, 0).unwrap();
        let (beta, b0) = merge(&[vec![0.0; 3], vec![0.0; 3]], &part, &[5.0; 6], &[1.0; 6], 2.5).unwrap();
        assert!(beta.iter().all(|&b| b == 0.0));
        assert_eq!(b0, 2.5);
    }

    #[test]
    fn merge_detects_gaps() {
        let part = partition_columns(6, 2, 0).unwrap();
        assert!(matches!(
            merge(&[vec![0.0; 3]], &part, &[0.0; 6], &[1.0; 6], 0.0),
            Err(DecoError::CoverageGap(_))
        ));
        assert!(matches!(
            merge(&[vec![0.0; 3], vec![0.0; 2]], &part, &[0.0; 6], &[1.0; 6], 0.0),
            Err(DecoError::CoverageGap(_))
        ));
    }
}
