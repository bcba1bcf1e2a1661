//! Dense column-major linear algebra: centering, the symmetric eigenproblem,
//! SPD inverse square roots and ridge solves.
//!
//! Everything here is sized by the sample count `n`, never by the feature
//! count `p`, so plain loops over contiguous columns are adequate.

use rayon::prelude::*;

use crate::error::{DecoError, Result};

/// Dense real matrix stored column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds a matrix from column-major data, rejecting non-finite entries.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(DecoError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DecoError::NonFinite {
                row: pos % rows.max(1),
                col: pos / rows.max(1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from a list of columns of equal length.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(DecoError::DimensionMismatch(format!(
                    "column {j} has {} rows, expected {rows}",
                    c.len()
                )));
            }
            data.extend_from_slice(c);
        }
        Matrix::from_col_major(rows, columns.len(), data)
    }

    /// Row-major convenience constructor, mostly for tests.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(DecoError::DimensionMismatch("ragged rows".into()));
        }
        Matrix::from_col_major(n, c, (0..c).flat_map(|j| rows.iter().map(move |r| r[j])).collect())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(v.is_finite());
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.rows.max(1)).take(self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        Matrix {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(idx.len(), self.cols, |i, j| self.get(idx[i], j))
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// `self * other`. Output columns are computed independently, so the
    /// result does not depend on how many threads run the loop.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(DecoError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        if self.rows == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(self.rows)
            .enumerate()
            .for_each(|(j, out_col)| {
                for (k, &b) in other.col(j).iter().enumerate() {
                    if b != 0.0 {
                        axpy(b, self.col(k), out_col);
                    }
                }
            });
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(DecoError::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (j, &b) in v.iter().enumerate() {
            if b != 0.0 {
                axpy(b, self.col(j), &mut out);
            }
        }
        Ok(out)
    }

    /// `selfᵀ v`.
    pub fn t_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(DecoError::DimensionMismatch(format!(
                "transpose of {}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(self.columns().map(|c| dot(c, v)).collect())
    }

    /// Column Gram `selfᵀ self`.
    pub fn col_gram(&self) -> Matrix {
        let q = self.cols;
        let mut g = Matrix::zeros(q, q);
        for j in 0..q {
            for i in 0..=j {
                let v = dot(self.col(i), self.col(j));
                g.data[j * q + i] = v;
                g.data[i * q + j] = v;
            }
        }
        g
    }

    /// Row Gram `self selfᵀ`, accumulated as a sum of rank-one column
    /// updates in ascending column order.
    pub fn row_gram(&self) -> Matrix {
        let n = self.rows;
        let mut g = Matrix::zeros(n, n);
        for c in self.columns() {
            for k in 0..n {
                let ck = c[k];
                if ck == 0.0 {
                    continue;
                }
                let gk = &mut g.data[k * n..k * n + k + 1];
                for (gi, &ci) in gk.iter_mut().zip(&c[..=k]) {
                    *gi += ci * ck;
                }
            }
        }
        g.mirror_upper();
        g
    }

    /// Copies the upper triangle onto the lower one.
    pub(crate) fn mirror_upper(&mut self) {
        let n = self.rows;
        for j in 0..n {
            for i in 0..j {
                self.data[i * n + j] = self.data[j * n + i];
            }
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(DecoError::DimensionMismatch(format!(
                "{:?} + {:?}",
                self.shape(),
                other.shape()
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn add_diag(&mut self, d: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.rows + i] += d;
        }
    }

    /// Largest `|a_ij - a_ji|` relative to `1 + max |a_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in 0..j {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst / (1.0 + self.max_abs())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Centered (and optionally unit-variance) copy of a design and response.
#[derive(Clone, Debug)]
pub struct Standardized {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub col_means: Vec<f64>,
    /// Sample standard deviations used for scaling; all ones when scaling
    /// was not requested.
    pub col_scales: Vec<f64>,
    pub y_mean: f64,
}

/// Centers every column of `x` and the response to mean zero and, when
/// `scale` is set, divides each column by its sample standard deviation.
pub fn center_scale(x: &Matrix, y: &[f64], scale: bool) -> Result<Standardized> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(DecoError::DimensionMismatch(format!(
            "response has {} entries, design has {n} rows",
            y.len()
        )));
    }
    if n < 2 {
        return Err(DecoError::TooFewRows { needed: 2, got: n });
    }
    let mut out = x.clone();
    let mut col_means = Vec::with_capacity(p);
    let mut col_scales = Vec::with_capacity(p);
    for j in 0..p {
        let col = out.col_mut(j);
        let m = mean(col);
        col.iter_mut().for_each(|v| *v -= m);
        let s = if scale {
            let sd = (col.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64).sqrt();
            if !(sd > 1e-12 * (1.0 + m.abs())) {
                return Err(DecoError::ConstantColumn(j));
            }
            col.iter_mut().for_each(|v| *v /= sd);
            sd
        } else {
            1.0
        };
        col_means.push(m);
        col_scales.push(s);
    }
    let y_mean = mean(y);
    let y0 = y.iter().map(|v| v - y_mean).collect();
    Ok(Standardized {
        x: out,
        y: y0,
        col_means,
        col_scales,
        y_mean,
    })
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending and
/// eigenvectors stored as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenDecomposition {
    /// `V diag(values) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            scaled.col_mut(j).iter_mut().for_each(|v| *v *= l);
        }
        let mut out = Matrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = (0..n)
                    .map(|k| scaled.get(i, k) * self.vectors.get(j, k))
                    .sum::<f64>();
                out.set(i, j, v);
            }
        }
        out.mirror_upper();
        out
    }

    /// `max |VᵀV - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.vectors.col_gram();
        g.max_abs_diff(&Matrix::identity(g.rows()))
    }
}

pub const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-12;

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..j {
            let v = a.get(i, j);
            s += 2.0 * v * v;
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps until the off-diagonal Frobenius norm drops below `1e-12` of its
/// initial value. Running out of sweeps is reported as `NoConvergence`.
pub fn sym_eig(a: &Matrix) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(DecoError::DimensionMismatch(format!(
            "eigenproblem on a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let asym = a.asymmetry();
    if asym > 1e-10 {
        return Err(DecoError::NotSymmetric(asym));
    }
    let n = a.rows();
    let mut w = a.clone();
    w.mirror_upper();
    let mut v = Matrix::identity(n);
    let off0 = off_diagonal_norm(&w);
    let target = JACOBI_REL_TOL * off0;

    let mut sweep = 0;
    let mut off = off0;
    while off > target {
        if sweep == JACOBI_MAX_SWEEPS {
            return Err(DecoError::NoConvergence {
                sweeps: sweep,
                off_norm: off,
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w.data[q * n + p];
                if apq == 0.0 {
                    continue;
                }
                let app = w.data[p * n + p];
                let aqq = w.data[q * n + q];
                // Negligible next to both diagonal entries: drop it outright.
                if sweep > 3 && app.abs() + 1e2 * apq.abs() == app.abs() && aqq.abs() + 1e2 * apq.abs() == aqq.abs() {
                    w.data[q * n + p] = 0.0;
                    w.data[p * n + q] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate_columns(&mut w.data, n, p, q, c, s);
                // Rows mirror the rotated columns except at the pivot block.
                for k in 0..n {
                    if k != p && k != q {
                        w.data[k * n + p] = w.data[p * n + k];
                        w.data[k * n + q] = w.data[q * n + k];
                    }
                }
                w.data[p * n + p] = app - t * apq;
                w.data[q * n + q] = aqq + t * apq;
                w.data[q * n + p] = 0.0;
                w.data[p * n + q] = 0.0;
                rotate_columns(&mut v.data, n, p, q, c, s);
            }
        }
        sweep += 1;
        off = off_diagonal_norm(&w);
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| w.data[i * n + i]).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = v.select_columns(&order);
    Ok(EigenDecomposition { values, vectors })
}

/// Applies the plane rotation to columns `p` and `q` of an `n`-row matrix.
fn rotate_columns(data: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    debug_assert!(p < q);
    let (head, tail) = data.split_at_mut(q * n);
    let cp = &mut head[p * n..(p + 1) * n];
    let cq = &mut tail[..n];
    for (xp, xq) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *xp;
        let b = *xq;
        *xp = c * a - s * b;
        *xq = s * a + c * b;
    }
}

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGEN_CLAMP_REL: f64 = 1e-14;
/// Without a ridge, the smallest eigenvalue must exceed this fraction of
/// the largest.
pub const SINGULAR_REL: f64 = 1e-12;

/// Per-eigenvalue weights `(λ_i + r1)^(-1/2)` after clamping, shared by the
/// symmetric and row-rotation forms of the whitening transform.
pub fn inv_sqrt_weights(values: &[f64], r1: f64) -> Result<Vec<f64>> {
    if !(r1 >= 0.0) || !r1.is_finite() {
        return Err(DecoError::InvalidArgument(format!("ridge r1 must be >= 0, got {r1}")));
    }
    let lmax = values.iter().cloned().fold(0.0, f64::max);
    let clamped: Vec<f64> = values
        .iter()
        .map(|&l| if l < EIGEN_CLAMP_REL * lmax { 0.0 } else { l })
        .collect();
    if r1 == 0.0 {
        let lmin = clamped.iter().cloned().fold(f64::INFINITY, f64::min);
        if lmax <= 0.0 || lmin <= SINGULAR_REL * lmax {
            let ratio = if lmax > 0.0 { lmin / lmax } else { 0.0 };
            return Err(DecoError::SingularWithoutRidge(ratio));
        }
    }
    Ok(clamped.iter().map(|&l| 1.0 / (l + r1).sqrt()).collect())
}

/// `√p (F + r1 I)^(-1/2)` for symmetric positive semi-definite `F`.
pub fn spd_inv_sqrt(f: &Matrix, r1: f64, p: usize) -> Result<Matrix> {
    let eig = sym_eig(f)?;
    spd_inv_sqrt_from_eig(&eig, r1, p)
}

pub fn spd_inv_sqrt_from_eig(eig: &EigenDecomposition, r1: f64, p: usize) -> Result<Matrix> {
    let weights = inv_sqrt_weights(&eig.values, r1)?;
    let n = weights.len();
    let root_p = (p as f64).sqrt();
    // G = V diag(w^(1/2)), result = √p G Gᵀ (exactly symmetric by mirroring).
    let mut g = eig.vectors.clone();
    for (j, &w) in weights.iter().enumerate() {
        let s = w.sqrt();
        g.col_mut(j).iter_mut().for_each(|v| *v *= s);
    }
    let gt = g.transpose();
    let mut out = Matrix::zeros(n, n);
    for j in 0..n {
        let gj = gt.col(j);
        for i in 0..=j {
            out.data[j * n + i] = root_p * dot(gt.col(i), gj);
        }
    }
    out.mirror_upper();
    Ok(out)
}

/// `√p (Λ + r1 I)^(-1/2) Vᵀ`, the rotated-row form of the same transform.
pub fn scaled_inv_sqrt_rows(eig: &EigenDecomposition, r1: f64, p: usize) -> Result<Matrix> {
    let weights = inv_sqrt_weights(&eig.values, r1)?;
    let root_p = (p as f64).sqrt();
    let n = weights.len();
    Ok(Matrix::from_fn(n, n, |i, j| {
        root_p * weights[i] * eig.vectors.get(j, i)
    }))
}

/// Eigenvalues below this fraction of the largest are outside the range
/// used by [`spd_pinv_sqrt`].
pub const PINV_RANK_REL: f64 = 1e-10;

/// `(F/p)^(+/2)`, the Moore-Penrose inverse square root of a symmetric PSD
/// `F` scaled by `√p`. Directions with eigenvalue below `PINV_RANK_REL`
/// times the largest get weight zero. When `F = XXᵀ` and `X` has full
/// column rank, `(F/p)^(+/2) X` has orthogonal columns of squared norm `p`.
pub fn spd_pinv_sqrt(f: &Matrix, p: usize) -> Result<Matrix> {
    let eig = sym_eig(f)?;
    let lmax = eig.values.iter().cloned().fold(0.0, f64::max);
    let n = eig.values.len();
    let root_p = (p as f64).sqrt();
    let mut out = Matrix::zeros(n, n);
    for (k, &l) in eig.values.iter().enumerate() {
        if lmax <= 0.0 || l < PINV_RANK_REL * lmax {
            continue;
        }
        let w = root_p / l.sqrt();
        let v = eig.vectors.col(k);
        for j in 0..n {
            let s = w * v[j];
            for i in 0..=j {
                out.data[j * n + i] += s * v[i];
            }
        }
    }
    out.mirror_upper();
    Ok(out)
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(DecoError::DimensionMismatch("Cholesky of non-square matrix".into()));
        }
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if !(d > 0.0) {
                return Err(DecoError::NotPositiveDefinite(j));
            }
            let djj = d.sqrt();
            l.set(j, j, djj);
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / djj);
            }
        }
        Ok(Cholesky { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        assert_eq!(b.len(), n);
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l.get(i, k) * z[k];
            }
            z[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l.get(k, i) * z[k];
            }
            z[i] = s / self.l.get(i, i);
        }
        z
    }
}

/// Ridge estimate `(XᵀX + r2 I)⁻¹ Xᵀy` via Cholesky.
pub fn ridge_solve(x: &Matrix, y: &[f64], r2: f64) -> Result<Vec<f64>> {
    if !(r2 > 0.0) {
        return Err(DecoError::InvalidArgument(format!("ridge r2 must be > 0, got {r2}")));
    }
    let xty = x.t_matvec(y)?;
    let mut g = x.col_gram();
    g.add_diag(r2);
    Ok(Cholesky::new(&g)?.solve(&xty))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn center_only_subtracts_mean() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let s = center_scale(&x, &[0.0, 0.0, 3.0], false).unwrap();
        assert_eq!(s.x.col(0), &[-1.0, 0.0, 1.0]);
        assert_eq!(s.col_means, vec![2.0]);
        assert_eq!(s.col_scales, vec![1.0]);
        assert_eq!(s.y_mean, 1.0);
    }

    #[test]
    fn centered_column_is_unchanged() {
        let r = 1.0 / 2f64.sqrt();
        let x = Matrix::from_rows(&[vec![r], vec![0.0], vec![-r]]).unwrap();
        let s = center_scale(&x, &[1.0, 2.0, 3.0], false).unwrap();
        assert!(s.x.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn center_scale_gaussian_columns() {
        let x = random_matrix(20, 5, 3);
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let s = center_scale(&x, &y, true).unwrap();
        for c in s.x.columns() {
            let m = c.iter().sum::<f64>() / 20.0;
            let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 19.0).sqrt();
            assert!(m.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-10);
        }
        assert!(mean(&s.y).abs() < 1e-12);
    }

    #[test]
    fn center_scale_errors() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0]]).unwrap();
        assert_eq!(center_scale(&x, &[1.0, 2.0], true).unwrap_err(), DecoError::ConstantColumn(1));
        assert!(center_scale(&x, &[1.0, 2.0], false).is_ok());
        assert!(matches!(
            center_scale(&x, &[1.0], false),
            Err(DecoError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn construction_rejects_nan() {
        assert!(matches!(
            Matrix::from_col_major(2, 1, vec![1.0, f64::NAN]),
            Err(DecoError::NonFinite { row: 1, col: 0 })
        ));
    }

    #[test]
    fn eig_identity() {
        let e = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        assert!(e.orthonormality_error() < 1e-12);
    }

    #[test]
    fn eig_diagonal_sorted() {
        let e = sym_eig(&Matrix::from_diag(&[1.0, 4.0])).unwrap();
        assert_eq!(e.values, vec![4.0, 1.0]);
        assert_eq!(e.vectors.get(1, 0).abs(), 1.0);
        assert_eq!(e.vectors.get(0, 1).abs(), 1.0);
    }

    #[test]
    fn eig_random_spd_reconstructs() {
        let b = random_matrix(8, 8, 11);
        let a = b.matmul(&b.transpose()).unwrap();
        let e = sym_eig(&a).unwrap();
        assert!(e.reconstruct().max_abs_diff(&a) <= 1e-9 * (1.0 + a.max_abs()));
        assert!(e.orthonormality_error() <= 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&a), Err(DecoError::NotSymmetric(_))));
    }

    #[test]
    fn inv_sqrt_identity_scales_by_root_p() {
        let f = spd_inv_sqrt(&Matrix::identity(3), 0.0, 4).unwrap();
        assert!(f.max_abs_diff(&Matrix::from_diag(&[2.0, 2.0, 2.0])) < 1e-14);
    }

    #[test]
    fn inv_sqrt_with_ridge() {
        let f = spd_inv_sqrt(&Matrix::from_diag(&[3.0, 3.0]), 1.0, 16).unwrap();
        assert!(f.max_abs_diff(&Matrix::from_diag(&[2.0, 2.0])) < 1e-14);
    }

    #[test]
    fn pinv_sqrt_drops_null_directions() {
        let f = spd_pinv_sqrt(&Matrix::from_diag(&[4.0, 0.0]), 1).unwrap();
        assert!(f.max_abs_diff(&Matrix::from_diag(&[0.5, 0.0])) < 1e-14);
        let x = random_matrix(12, 4, 9);
        let xt = spd_pinv_sqrt(&x.row_gram(), 4).unwrap().matmul(&x).unwrap();
        let mut g = xt.col_gram();
        g.add_diag(-4.0);
        assert!(g.max_abs() < 1e-10);
    }

    #[test]
    fn inv_sqrt_round_trip_wide() {
        let x = random_matrix(10, 50, 5);
        let f = x.row_gram();
        let fbar = spd_inv_sqrt(&f, 1.0, 50).unwrap();
        let mut fr = f.clone();
        fr.add_diag(1.0);
        let mut prod = fbar.matmul(&fr).unwrap().matmul(&fbar).unwrap();
        prod.scale(1.0 / 50.0);
        assert!(prod.max_abs_diff(&Matrix::identity(10)) < 1e-8);
        assert!(fbar.asymmetry() == 0.0);
    }

    #[test]
    fn inv_sqrt_singular_without_ridge() {
        let x = random_matrix(10, 50, 6);
        let c = center_scale(&x, &[0.0; 10], false).unwrap();
        let f = c.x.row_gram();
        assert!(matches!(
            spd_inv_sqrt(&f, 0.0, 50),
            Err(DecoError::SingularWithoutRidge(_))
        ));
        assert!(spd_inv_sqrt(&f, 1.0, 50).is_ok());
    }

    #[test]
    fn rows_form_whitens_like_symmetric_form() {
        let x = random_matrix(6, 20, 9);
        let f = x.row_gram();
        let eig = sym_eig(&f).unwrap();
        let t = scaled_inv_sqrt_rows(&eig, 0.0, 20).unwrap();
        let xt = t.matmul(&x).unwrap();
        let mut g = xt.row_gram();
        g.scale(1.0 / 20.0);
        assert!(g.max_abs_diff(&Matrix::identity(6)) < 1e-9);
    }

    #[test]
    fn ridge_orthonormal_halves() {
        // Columns e1, e2 in R^3.
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let b = ridge_solve(&x, &[4.0, -2.0, 7.0], 1.0).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-14 && (b[1] + 1.0).abs() < 1e-14);
        assert_eq!(ridge_solve(&x, &[0.0; 3], 1.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn ridge_normal_equation_residual() {
        let x = random_matrix(30, 5, 21);
        let y: Vec<f64> = random_matrix(30, 1, 22).into_data();
        let b = ridge_solve(&x, &y, 0.3).unwrap();
        let xty = x.t_matvec(&y).unwrap();
        let mut g = x.col_gram();
        g.add_diag(0.3);
        let lhs = g.matvec(&b).unwrap();
        let res: Vec<f64> = lhs.iter().zip(&xty).map(|(a, b)| a - b).collect();
        assert!(norm2(&res) <= 1e-8 * norm2(&xty));
    }

    #[test]
    fn ridge_rejects_nonpositive() {
        let x = Matrix::identity(2);
        assert!(ridge_solve(&x, &[1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn row_gram_matches_matmul() {
        let x = random_matrix(7, 13, 1);
        let g = x.row_gram();
        let h = x.matmul(&x.transpose()).unwrap();
        assert!(g.max_abs_diff(&h) < 1e-12);
    }
}
