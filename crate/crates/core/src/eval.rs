//! Estimation metrics and design diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DecoError, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::{Stage, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `‖β̂ − β*‖₂²`.
    pub mse: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sign_consistent: bool,
    /// Mean squared prediction error on held-out rows.
    pub pred_mse: Option<f64>,
}

/// Compares an estimate against the truth. A coefficient counts as
/// selected iff it is exactly nonzero.
pub fn compute_metrics(beta_hat: &[f64], beta_true: &[f64]) -> Result<Metrics> {
    if beta_hat.len() != beta_true.len() {
        return Err(DecoError::DimensionMismatch(format!(
            "estimate has {} coefficients, truth has {}",
            beta_hat.len(),
            beta_true.len()
        )));
    }
    let mut mse = 0.0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut signs_match = true;
    for (&b, &t) in beta_hat.iter().zip(beta_true) {
        mse += (b - t) * (b - t);
        match (b != 0.0, t != 0.0) {
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (true, true) if b.signum() != t.signum() => signs_match = false,
            _ => {}
        }
    }
    Ok(Metrics {
        mse,
        fp,
        fn_,
        sign_consistent: fp == 0 && fn_ == 0 && signs_match,
        pred_mse: None,
    })
}

pub fn prediction_mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// Exact over all column pairs, or a seeded sample of pairs for wide designs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PairSampling {
    Exact,
    Sampled { pairs: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// Smallest `xᵢᵀxᵢ / n`.
    pub min_diag: f64,
    /// Largest `xᵢᵀxᵢ / n`.
    pub max_diag: f64,
    /// Largest `|xᵢᵀxⱼ| / n` over `i ≠ j`.
    pub max_offdiag: f64,
    /// `‖XᵀW‖∞ / n`, when the noise is known.
    pub noise_corr: Option<f64>,
    pub n: usize,
    pub p: usize,
    pub sampled: bool,
}

/// Measures the column-norm bounds, the largest cross-correlation and,
/// given the noise, the noise correlation of a design.
pub fn design_diagnostics(x: &Matrix, w: Option<&[f64]>, sampling: PairSampling) -> Result<DiagnosticsReport> {
    let (n, p) = x.shape();
    if p < 2 {
        return Err(DecoError::InvalidArgument("diagnostics need at least two columns".into()));
    }
    let nf = n as f64;
    let diag: Vec<f64> = x.columns().map(|c| dot(c, c) / nf).collect();
    let min_diag = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_diag = diag.iter().cloned().fold(0.0, f64::max);

    let (max_offdiag, sampled) = match sampling {
        PairSampling::Exact => {
            let m = (1..p)
                .into_par_iter()
                .map(|j| {
                    let cj = x.col(j);
                    (0..j).fold(0.0f64, |m, i| m.max(dot(x.col(i), cj).abs()))
                })
                .reduce(|| 0.0, f64::max);
            (m / nf, false)
        }
        PairSampling::Sampled { pairs, seed } => {
            let mut s = Stream::new(seed, Stage::Misc, 1);
            let mut m = 0.0f64;
            for _ in 0..pairs {
                let i = s.below(p);
                let mut j = s.below(p - 1);
                if j >= i {
                    j += 1;
                }
                m = m.max(dot(x.col(i), x.col(j)).abs());
            }
            (m / nf, true)
        }
    };

    let noise_corr = match w {
        Some(w) => Some(crate::linalg::norm_inf(&x.t_matvec(w)?) / nf),
        None => None,
    };
    Ok(DiagnosticsReport {
        min_diag,
        max_diag,
        max_offdiag,
        noise_corr,
        n,
        p,
        sampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_estimate() {
        let m = compute_metrics(&[1.0, 0.0, -2.0], &[1.0, 0.0, -2.0]).unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!((m.fp, m.fn_), (0, 0));
        assert!(m.sign_consistent);
    }

    #[test]
    fn empty_estimate_misses_everything() {
        let truth = [1.0, 2.0, 3.0, -1.0, 5.0, 0.0];
        let m = compute_metrics(&[0.0; 6], &truth).unwrap();
        assert_eq!((m.fp, m.fn_), (0, 5));
        assert!(!m.sign_consistent);
    }

    #[test]
    fn hand_case() {
        let m = compute_metrics(&[2.0, -1.0], &[1.0, 0.0]).unwrap();
        assert_eq!(m.mse, 2.0);
        assert_eq!((m.fp, m.fn_), (1, 0));
        assert!(!m.sign_consistent);
    }

    #[test]
    fn wrong_sign_breaks_consistency() {
        let m = compute_metrics(&[-1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!((m.fp, m.fn_), (0, 0));
        assert!(!m.sign_consistent);
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn orthonormal_design_diagnostics() {
        // Columns of √n · I_n restricted to 3 columns: xᵢᵀxᵢ/n = 1, cross terms 0.
        let n = 4;
        let s = (n as f64).sqrt();
        let x = Matrix::from_fn(n, 3, |i, j| if i == j { s } else { 0.0 });
        let r = design_diagnostics(&x, None, PairSampling::Exact).unwrap();
        assert!((r.min_diag - 1.0).abs() < 1e-15 && (r.max_diag - 1.0).abs() < 1e-15);
        assert_eq!(r.max_offdiag, 0.0);
        assert_eq!(r.noise_corr, None);
    }

    #[test]
    fn sampled_never_exceeds_exact() {
        let mut s = Stream::new(4, Stage::Misc, 0);
        let x = Matrix::from_fn(10, 30, |_, _| s.normal());
        let exact = design_diagnostics(&x, None, PairSampling::Exact).unwrap();
        let sampled = design_diagnostics(&x, None, PairSampling::Sampled { pairs: 50, seed: 1 }).unwrap();
        assert!(sampled.sampled);
        assert!(sampled.max_offdiag <= exact.max_offdiag);
    }

    #[test]
    fn noise_correlation() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let r = design_diagnostics(&x, Some(&[4.0, 1.0]), PairSampling::Exact).unwrap();
        assert_eq!(r.noise_corr, Some(2.0));
    }
}
