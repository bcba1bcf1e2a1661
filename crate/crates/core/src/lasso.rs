//! Coordinate-descent lasso.
//!
//! The objective is
//!
//! ```text
//! (1/n) ‖y − Xβ‖² + 2λ ‖β‖₁
//! ```
//!
//! Note the factor of two on the penalty. A λ here equals the `alpha`/`lambda`
//! of the `(1/2n)‖y − Xβ‖² + λ‖β‖₁` convention (glmnet, scikit-learn) exactly,
//! since dividing the objective above by two gives that form with the same λ.
//! The KKT conditions read `(1/n) x_jᵀ(y − Xβ) = λ sign(β_j)` on the active set
//! and `|(1/n) x_jᵀ(y − Xβ)| ≤ λ` elsewhere.

use serde::{Deserialize, Serialize};

use crate::error::{DecoError, Result};
use crate::linalg::{axpy, dot, norm_inf, sym_eig, Cholesky, Matrix};

#[derive(Clone, Copy, Debug)]
pub struct LassoProblem<'a> {
    pub x: &'a Matrix,
    pub y: &'a [f64],
    pub lambda: f64,
}

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `(1/n)‖y − Xβ‖² + 2λ‖β‖₁`.
pub fn objective(x: &Matrix, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let fit = x.matvec(beta).expect("beta length");
    let rss: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).sum();
    rss / y.len() as f64 + 2.0 * lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

#[derive(Clone, Copy, Debug)]
pub struct CdOptions {
    /// Converged once a full sweep moves no coordinate by more than
    /// `tol (1 + ‖β‖∞)`.
    pub tol: f64,
    /// Cap on coordinate sweeps (full and active-set sweeps both count).
    pub max_sweeps: usize,
    /// KKT residual required before a converged full sweep is accepted.
    pub kkt_tol: f64,
}

impl Default for CdOptions {
    fn default() -> Self {
        CdOptions {
            tol: 1e-9,
            max_sweeps: 10_000,
            kkt_tol: 1e-7,
        }
    }
}

/// Active-set sweeps between attempts at [`CdSolver::sign_fixed_step`].
const SIGN_FIXED_EVERY: usize = 50;
/// Cold solves below this fraction of `λ_max` use continuation.
const CONTINUATION_START: f64 = 0.5;
const CONTINUATION_PER_DECADE: f64 = 5.0;
/// Relative eigenvalue below which a Gram direction counts as null.
const NULL_REL: f64 = 1e-10;
/// KKT violators admitted to the working set per scan.
const WORKING_SET_GROWTH: usize = 10;

/// Solver bound to one design and response; reused across λ values.
pub struct CdSolver<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    col_sq: Vec<f64>,
    opts: CdOptions,
}

/// Mutable iterate: coefficients plus the matching residual `y − Xβ`.
#[derive(Clone, Debug)]
pub struct CdState {
    pub beta: Vec<f64>,
    pub resid: Vec<f64>,
}

impl<'a> CdSolver<'a> {
    pub fn new(x: &'a Matrix, y: &'a [f64], opts: CdOptions) -> Result<Self> {
        let (n, _) = x.shape();
        if y.len() != n {
            return Err(DecoError::DimensionMismatch(format!(
                "response has {} entries, design has {n} rows",
                y.len()
            )));
        }
        if n == 0 {
            return Err(DecoError::TooFewRows { needed: 1, got: 0 });
        }
        let col_sq: Vec<f64> = x.columns().map(|c| dot(c, c) / n as f64).collect();
        if x.cols() > 0 && col_sq.iter().all(|&c| c == 0.0) {
            return Err(DecoError::InvalidArgument("every design column is zero".into()));
        }
        Ok(CdSolver { x, y, col_sq, opts })
    }

    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    pub fn state(&self, warm: Option<&[f64]>) -> Result<CdState> {
        let q = self.x.cols();
        let beta = match warm {
            Some(w) if w.len() != q => {
                return Err(DecoError::DimensionMismatch(format!(
                    "warm start has {} entries, expected {q}",
                    w.len()
                )))
            }
            Some(w) => w.to_vec(),
            None => vec![0.0; q],
        };
        let mut state = CdState {
            beta,
            resid: Vec::new(),
        };
        self.refresh_residual(&mut state);
        Ok(state)
    }

    fn refresh_residual(&self, state: &mut CdState) {
        let mut r = self.y.to_vec();
        for (j, &b) in state.beta.iter().enumerate() {
            if b != 0.0 {
                axpy(-b, self.x.col(j), &mut r);
            }
        }
        state.resid = r;
    }

    #[inline]
    fn update(&self, j: usize, lambda: f64, state: &mut CdState) -> f64 {
        let cj = self.col_sq[j];
        if cj == 0.0 {
            return 0.0;
        }
        let col = self.x.col(j);
        let old = state.beta[j];
        let z = dot(col, &state.resid) / self.n() + cj * old;
        let new = soft_threshold(z, lambda) / cj;
        if new != old {
            axpy(old - new, col, &mut state.resid);
            state.beta[j] = new;
        }
        (new - old).abs()
    }

    /// One cyclic pass over every coordinate; returns the largest change.
    pub fn full_sweep(&self, lambda: f64, state: &mut CdState) -> f64 {
        (0..self.x.cols()).fold(0.0, |m, j| m.max(self.update(j, lambda, state)))
    }

    fn active_sweep(&self, lambda: f64, active: &[usize], state: &mut CdState) -> f64 {
        active
            .iter()
            .fold(0.0, |m, &j| m.max(self.update(j, lambda, state)))
    }

    fn kkt_violation(&self, lambda: f64, state: &CdState) -> f64 {
        let n = self.n();
        self.x
            .columns()
            .zip(&state.beta)
            .map(|(c, &b)| kkt_residual(dot(c, &state.resid) / n, b, lambda))
            .fold(0.0, f64::max)
    }

    /// Active-set moves within the current sign orthant, each of which
    /// lowers the objective. With the active columns `X_A` of full column
    /// rank, the orthant minimizer is `b = (X_AᵀX_A)⁻¹(X_Aᵀy − nλ s_A)`; the
    /// iterate moves towards it and stops where the first coordinate reaches
    /// zero, which then leaves the active set. When `X_A` has a null
    /// direction `d`, the fit is flat along `d` and the penalty linear, so
    /// the iterate moves along `±d` until a coordinate reaches zero.
    ///
    /// Cyclic sweeps slow to a crawl once the active columns are nearly
    /// collinear (support close to `n`); these moves do not, and the sweeps
    /// that follow still confirm the result.
    fn sign_fixed_step(&self, lambda: f64, active: &[usize], state: &mut CdState) {
        let n = self.n();
        let before = state.beta.clone();
        let f0 = objective(self.x, self.y, &state.beta, lambda);
        let mut set: Vec<usize> = active.iter().copied().filter(|&j| state.beta[j] != 0.0).collect();
        while !set.is_empty() {
            let xa = self.x.select_columns(&set);
            let gram = xa.col_gram();
            let signs: Vec<f64> = set.iter().map(|&j| state.beta[j].signum()).collect();
            let chol = if set.len() <= self.y.len() { Cholesky::new(&gram).ok() } else { None };
            let (direction, full) = match chol {
                Some(chol) => {
                    let rhs: Vec<f64> = xa
                        .columns()
                        .zip(&signs)
                        .map(|(c, s)| dot(c, self.y) - n * lambda * s)
                        .collect();
                    let b = chol.solve(&rhs);
                    let d: Vec<f64> = set.iter().zip(&b).map(|(&j, bk)| bk - state.beta[j]).collect();
                    (d, true)
                }
                None => {
                    let Ok(eig) = sym_eig(&gram) else { break };
                    let k = eig.values.len() - 1;
                    if eig.values[k] > NULL_REL * eig.values[0].max(f64::MIN_POSITIVE) {
                        break;
                    }
                    let mut d = eig.vectors.col(k).to_vec();
                    if dot(&d, &signs) > 0.0 {
                        d.iter_mut().for_each(|v| *v = -*v);
                    }
                    (d, false)
                }
            };
            if direction.iter().any(|v| !v.is_finite()) {
                break;
            }
            // Largest step that keeps every sign; unbounded null moves stop
            // at the first zero.
            let (mut t, mut hit) = (if full { 1.0 } else { f64::INFINITY }, None);
            for (k, (&j, &dk)) in set.iter().zip(&direction).enumerate() {
                let cur = state.beta[j];
                if dk != 0.0 && cur.signum() != dk.signum() {
                    let tk = -cur / dk;
                    if tk < t {
                        t = tk;
                        hit = Some(k);
                    }
                }
            }
            if !t.is_finite() {
                break;
            }
            for (k, (&j, &dk)) in set.iter().zip(&direction).enumerate() {
                state.beta[j] = if Some(k) == hit { 0.0 } else { state.beta[j] + t * dk };
            }
            match hit {
                Some(k) => {
                    set.remove(k);
                }
                None => break,
            }
        }
        if objective(self.x, self.y, &state.beta, lambda) > f0 {
            state.beta = before;
        }
        self.refresh_residual(state);
    }

    /// Full sweeps until the support settles, then sweeps over the active
    /// set, always finishing with a full sweep that confirms convergence.
    ///
    /// Without a warm start and well below `λ_max`, the solver first walks
    /// down a short geometric sequence of λ values, warm-starting each from
    /// the last. A cold cyclic sweep at a small λ switches on nearly every
    /// column at once, and the iterations then crawl.
    pub fn solve(&self, lambda: f64, warm: Option<&[f64]>) -> Result<Vec<f64>> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(DecoError::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        let mut state = self.state(warm)?;
        if warm.is_none() {
            let top = norm_inf(&self.x.t_matvec(self.y)?) / self.n();
            let floor = lambda.max(top * 1e-4);
            if top > 0.0 && floor < CONTINUATION_START * top {
                let steps = (CONTINUATION_PER_DECADE * (top / floor).log10()).ceil() as usize;
                for k in 1..steps {
                    let lk = top * (floor / top).powf(k as f64 / steps as f64);
                    // Only a warm start; a stalled intermediate solve is fine.
                    let _ = self.run(lk, &mut state);
                }
            }
        }
        match self.run(lambda, &mut state) {
            Ok(()) => Ok(state.beta),
            Err((sweeps, max_change)) => Err(DecoError::MaxIterations { sweeps, max_change }),
        }
    }

    fn run(&self, lambda: f64, state: &mut CdState) -> std::result::Result<(), (usize, f64)> {
        let n = self.n();
        let q = self.x.cols();
        let mut sweeps = 0;
        let mut working: Vec<usize> = (0..q).filter(|&j| state.beta[j] != 0.0).collect();
        loop {
            // Converge on the working set.
            let mut inner = 0;
            while !working.is_empty() {
                let change = self.active_sweep(lambda, &working, state);
                sweeps += 1;
                inner += 1;
                if change < self.opts.tol * (1.0 + norm_inf(&state.beta)) {
                    break;
                }
                if sweeps >= self.opts.max_sweeps {
                    return Err((sweeps, change));
                }
                if inner == 1 || inner % SIGN_FIXED_EVERY == 0 {
                    self.sign_fixed_step(lambda, &working, state);
                }
            }

            // Grow the working set by the worst KKT violators outside it.
            self.refresh_residual(state);
            let mut violators: Vec<(f64, usize)> = (0..q)
                .filter(|&j| state.beta[j] == 0.0 && !working.contains(&j))
                .filter_map(|j| {
                    let g = (dot(self.x.col(j), &state.resid) / n).abs();
                    (g > lambda).then_some((g, j))
                })
                .collect();
            sweeps += 1;
            if !violators.is_empty() {
                violators.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                working.retain(|&j| state.beta[j] != 0.0);
                working.extend(violators.iter().take(WORKING_SET_GROWTH).map(|&(_, j)| j));
                working.sort_unstable();
                if sweeps >= self.opts.max_sweeps {
                    return Err((sweeps, f64::INFINITY));
                }
                continue;
            }

            // Confirm with a full cyclic sweep.
            let change = self.full_sweep(lambda, state);
            sweeps += 1;
            if change < self.opts.tol * (1.0 + norm_inf(&state.beta)) {
                self.refresh_residual(state);
                if self.kkt_violation(lambda, state) <= self.opts.kkt_tol * (1.0 + lambda) {
                    return Ok(());
                }
            }
            if sweeps >= self.opts.max_sweeps {
                return Err((sweeps, change));
            }
            working = (0..q).filter(|&j| state.beta[j] != 0.0).collect();
        }
    }
}

/// Solves one lasso problem with the default options.
pub fn cd_fit(problem: &LassoProblem<'_>, warm_start: Option<&[f64]>) -> Result<Vec<f64>> {
    CdSolver::new(problem.x, problem.y, CdOptions::default())?.solve(problem.lambda, warm_start)
}

/// Smallest λ at which the all-zero vector is optimal, `‖Xᵀy‖∞ / n`.
pub fn lambda_max(x: &Matrix, y: &[f64]) -> Result<f64> {
    Ok(norm_inf(&x.t_matvec(y)?) / y.len() as f64)
}

/// Geometric grid from λ_max down to `ratio · λ_max`.
pub fn lambda_grid(x: &Matrix, y: &[f64], n_lambda: usize, ratio: f64) -> Result<Vec<f64>> {
    if n_lambda < 2 {
        return Err(DecoError::InvalidArgument(format!("n_lambda must be >= 2, got {n_lambda}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DecoError::InvalidArgument(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    let top = lambda_max(x, y)?;
    if top == 0.0 {
        return Err(DecoError::DegenerateResponse);
    }
    let step = ratio.ln() / (n_lambda - 1) as f64;
    Ok((0..n_lambda).map(|k| top * (step * k as f64).exp()).collect())
}

#[inline]
fn kkt_residual(corr: f64, beta: f64, lambda: f64) -> f64 {
    if beta != 0.0 {
        (corr - lambda * beta.signum()).abs()
    } else {
        (corr.abs() - lambda).max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub max_violation: f64,
    pub pass: bool,
}

/// Checks the lasso optimality conditions coordinate by coordinate.
pub fn kkt_check(x: &Matrix, y: &[f64], beta: &[f64], lambda: f64, tol: f64) -> KktReport {
    let n = y.len() as f64;
    let fit = x.matvec(beta).expect("beta length matches columns");
    let resid: Vec<f64> = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
    let max_violation = x
        .columns()
        .zip(beta)
        .map(|(c, &b)| kkt_residual(dot(c, &resid) / n, b, lambda))
        .fold(0.0, f64::max);
    KktReport {
        max_violation,
        pass: max_violation <= tol,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub betas: Vec<Vec<f64>>,
    pub dfs: Vec<usize>,
    pub rss: Vec<f64>,
    /// The solver stalled before the end of the grid; only the entries for
    /// larger λ are kept.
    pub truncated: bool,
}

impl LassoPath {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PathOptions {
    pub n_lambda: usize,
    pub ratio: f64,
    /// The path stops once `1 − RSS/‖y‖²` exceeds this, as glmnet does;
    /// past that point the fit is interpolating noise.
    pub max_dev_ratio: f64,
    /// Tolerances for the path itself, looser than a final solve.
    pub cd: CdOptions,
    /// Tolerances for re-solving the selected λ.
    pub polish: CdOptions,
}

impl PathOptions {
    /// Path-point tolerances: enough to rank models by EBIC, not enough to
    /// certify optimality.
    pub const SCREENING: CdOptions = CdOptions {
        tol: 1e-6,
        max_sweeps: 2_000,
        kkt_tol: 1e-4,
    };
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            n_lambda: 100,
            ratio: 1e-3,
            max_dev_ratio: 0.999,
            cd: Self::SCREENING,
            polish: CdOptions::default(),
        }
    }
}

/// Warm-started regularization path over [`lambda_grid`].
///
/// If coordinate descent stalls at some λ after at least one success, the
/// path ends there and is flagged as truncated. This only happens deep in
/// the near-interpolating tail.
pub fn fit_path(x: &Matrix, y: &[f64], opts: &PathOptions) -> Result<LassoPath> {
    let grid = lambda_grid(x, y, opts.n_lambda, opts.ratio)?;
    let solver = CdSolver::new(x, y, opts.cd)?;
    let n = y.len();
    let tss = dot(y, y);
    let mut path = LassoPath {
        lambdas: Vec::with_capacity(grid.len()),
        betas: Vec::with_capacity(grid.len()),
        dfs: Vec::with_capacity(grid.len()),
        rss: Vec::with_capacity(grid.len()),
        truncated: false,
    };
    let mut warm: Option<Vec<f64>> = None;
    for &lambda in &grid {
        let beta = match solver.solve(lambda, warm.as_deref()) {
            Ok(beta) => beta,
            Err(DecoError::MaxIterations { .. }) if !path.is_empty() => {
                path.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let rss = residual_sum_squares(x, y, &beta);
        let df = beta.iter().filter(|&&b| b != 0.0).count();
        path.lambdas.push(lambda);
        path.dfs.push(df);
        path.rss.push(rss);
        path.betas.push(beta.clone());
        warm = Some(beta);
        if 1.0 - rss / tss > opts.max_dev_ratio || df >= n {
            break;
        }
    }
    Ok(path)
}

pub fn residual_sum_squares(x: &Matrix, y: &[f64], beta: &[f64]) -> f64 {
    let fit = x.matvec(beta).expect("beta length matches columns");
    y.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `n ln(RSS/n) + df ln n + 2γ df ln p`.
pub fn ebic_score(rss: f64, df: usize, n: usize, p_total: usize, gamma: f64) -> f64 {
    let nf = n as f64;
    let rss = rss.max(f64::MIN_POSITIVE);
    nf * (rss / nf).ln() + df as f64 * nf.ln() + 2.0 * gamma * df as f64 * (p_total as f64).ln()
}

/// Index of the EBIC-minimizing path entry. `p_total` is the dimension of
/// the full problem, not of the block being fitted. Ties go to the larger λ.
pub fn ebic_select(path: &LassoPath, n: usize, p_total: usize, gamma: f64) -> Result<usize> {
    if path.is_empty() {
        return Err(DecoError::EmptyPath);
    }
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (k, (&rss, &df)) in path.rss.iter().zip(&path.dfs).enumerate() {
        let s = ebic_score(rss, df, n, p_total, gamma);
        if s < best_score {
            best = k;
            best_score = s;
        }
    }
    Ok(best)
}
