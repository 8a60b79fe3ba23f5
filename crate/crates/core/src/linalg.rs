//! Dense row-major linear algebra and multivariate normals.
//!
//! Every covariance computation goes through a Cholesky factor; explicit
//! inverses only appear where a backward pass needs the full matrix, and
//! those are also assembled from triangular solves.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Jitter added to noise-free covariance matrices before factorization.
pub const DEFAULT_JITTER: f64 = 1e-6;
/// Largest jitter tried before giving up on a factorization.
pub const MAX_JITTER: f64 = 1e-2;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Dense real matrix in row-major order.
///
/// Zero-row matrices are allowed so that empty datasets keep their column
/// count.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
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
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn column_vector(values: &[f64]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
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

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// The 1x1 value of a scalar matrix.
    pub fn as_scalar(&self) -> f64 {
        debug_assert_eq!(self.shape(), (1, 1));
        self.data[0]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows > 0 && other.rows > 0 && self.cols != other.cols {
            return Err(Error::dims(format!(
                "vstack of {} and {} columns",
                self.cols, other.cols
            )));
        }
        let cols = if self.rows > 0 { self.cols } else { other.cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols,
            data,
        })
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.rows == 0 && self.data.is_empty() {
            self.cols = row.len();
        }
        if row.len() != self.cols {
            return Err(Error::dims(format!(
                "row of {} entries pushed onto {} columns",
                row.len(),
                self.cols
            )));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dims(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dims(format!(
                "matmul_t {}x{} by ({}x{})ᵀ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, other.rows, |i, j| {
            dot(self.row(i), other.row(j))
        }))
    }

    /// `selfᵀ · other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::dims(format!(
                "t_matmul ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::dims(format!(
                "matvec {}x{} by vector of {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::dims(format!(
                "elementwise op on {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn add_assign_scaled(&mut self, other: &Matrix, s: f64) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn add_diagonal(&self, value: f64) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] += value;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Symmetrizes in place: `(A + Aᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lower-triangular Cholesky factor of `m + jitter·I`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
    jitter: f64,
}

impl Cholesky {
    /// Factorizes `m + jitter·I`, escalating the jitter by 10x (starting no
    /// lower than [`DEFAULT_JITTER`]) up to [`MAX_JITTER`] on failure.
    pub fn factor(m: &Matrix, jitter: f64) -> Result<Cholesky> {
        if !m.is_square() {
            return Err(Error::dims(format!(
                "cholesky of a {}x{} matrix",
                m.rows(),
                m.cols()
            )));
        }
        let mut jitter = jitter.max(0.0);
        loop {
            if let Some(l) = try_cholesky(m, jitter) {
                return Ok(Cholesky { l, jitter });
            }
            if jitter >= MAX_JITTER {
                return Err(Error::NotPositiveDefinite { max_jitter: jitter });
            }
            jitter = (jitter * 10.0).max(DEFAULT_JITTER).min(MAX_JITTER);
        }
    }

    /// Factorizes exactly `m + jitter·I`, without escalation.
    pub fn factor_exact(m: &Matrix, jitter: f64) -> Result<Cholesky> {
        try_cholesky(m, jitter)
            .map(|l| Cholesky { l, jitter })
            .ok_or(Error::NotPositiveDefinite { max_jitter: jitter })
    }

    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// `ln |m + jitter·I|`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `(m + jitter·I) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Solves `L X = B` column by column.
    pub fn solve_lower_mat(&self, b: &Matrix) -> Matrix {
        let n = self.dim();
        let mut x = b.clone();
        let cols = b.cols();
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik == 0.0 {
                    continue;
                }
                for j in 0..cols {
                    let v = x[(k, j)];
                    x[(i, j)] -= lik * v;
                }
            }
            let d = self.l[(i, i)];
            for v in x.row_mut(i) {
                *v /= d;
            }
        }
        x
    }

    /// Solves `Lᵀ X = B`.
    pub fn solve_upper_mat(&self, b: &Matrix) -> Matrix {
        let n = self.dim();
        let mut x = b.clone();
        let cols = b.cols();
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self.l[(k, i)];
                if lki == 0.0 {
                    continue;
                }
                for j in 0..cols {
                    let v = x[(k, j)];
                    x[(i, j)] -= lki * v;
                }
            }
            let d = self.l[(i, i)];
            for v in x.row_mut(i) {
                *v /= d;
            }
        }
        x
    }

    pub fn solve_mat(&self, b: &Matrix) -> Matrix {
        self.solve_upper_mat(&self.solve_lower_mat(b))
    }

    /// `(m + jitter·I)⁻¹`, assembled from triangular solves.
    pub fn inverse(&self) -> Matrix {
        let mut inv = self.solve_mat(&Matrix::identity(self.dim()));
        inv.symmetrize();
        inv
    }

    /// `L Lᵀ`, i.e. the matrix that was actually factorized.
    pub fn reconstruct(&self) -> Matrix {
        self.l.matmul_t(&self.l).expect("square factor")
    }
}

fn try_cholesky(m: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                let d = m[(i, i)] + jitter - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[(i, i)] = d.sqrt();
            } else {
                l[(i, j)] = (m[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Lower-triangular `L` with `L·Lᵀ = m + jitter·I` (jitter escalated if needed).
pub fn cholesky(m: &Matrix, jitter: f64) -> Result<Matrix> {
    Cholesky::factor(m, jitter).map(|c| c.l)
}

/// Multivariate normal with a cached Cholesky factor of its covariance.
#[derive(Clone, Debug)]
pub struct Mvn {
    mean: Vec<f64>,
    cov: Matrix,
    chol: Cholesky,
}

impl Mvn {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Mvn> {
        Mvn::with_jitter(mean, cov, 0.0)
    }

    pub fn with_jitter(mean: Vec<f64>, cov: Matrix, jitter: f64) -> Result<Mvn> {
        if !cov.is_square() || cov.rows() != mean.len() {
            return Err(Error::dims(format!(
                "mean of {} with covariance {:?}",
                mean.len(),
                cov.shape()
            )));
        }
        let chol = Cholesky::factor(&cov, jitter)?;
        Ok(Mvn { mean, cov, chol })
    }

    pub fn standard(dim: usize) -> Mvn {
        Mvn::new(vec![0.0; dim], Matrix::identity(dim)).expect("identity is PD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn chol(&self) -> &Cholesky {
        &self.chol
    }

    pub fn variances(&self) -> Vec<f64> {
        self.cov.diagonal()
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        mvn_logpdf(self, x)
    }

    pub fn sample(&self, noise: &[f64]) -> Result<Vec<f64>> {
        mvn_sample(self, noise)
    }
}

/// Exact Gaussian log-density via two triangular solves.
pub fn mvn_logpdf(d: &Mvn, x: &[f64]) -> Result<f64> {
    if x.len() != d.dim() {
        return Err(Error::dims(format!(
            "point of dim {} for MVN of dim {}",
            x.len(),
            d.dim()
        )));
    }
    let r: Vec<f64> = x.iter().zip(&d.mean).map(|(a, b)| a - b).collect();
    let z = d.chol.solve_lower(&r);
    let maha = dot(&z, &z);
    Ok(-0.5 * maha - 0.5 * d.chol.log_det() - 0.5 * d.dim() as f64 * LN_2PI)
}

/// `KL(p ‖ q)` for two multivariate normals of the same dimension.
///
/// Uses the factorized covariances, so `kl_mvn(p, p)` is exactly zero up to
/// rounding.
pub fn kl_mvn(p: &Mvn, q: &Mvn) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::dims(format!(
            "KL between dims {} and {}",
            p.dim(),
            q.dim()
        )));
    }
    let l = p.dim() as f64;
    // tr(Kq⁻¹ Kp) = ‖Lq⁻¹ Lp‖²_F
    let trace = q.chol.solve_lower_mat(p.chol.l()).frobenius_sq();
    let diff: Vec<f64> = p.mean.iter().zip(&q.mean).map(|(a, b)| a - b).collect();
    let z = q.chol.solve_lower(&diff);
    let maha = dot(&z, &z);
    let kl = 0.5 * (trace + maha - l + q.chol.log_det() - p.chol.log_det());
    Ok(kl)
}

/// Reparameterized draw `mean + L·noise`.
pub fn mvn_sample(d: &Mvn, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != d.dim() {
        return Err(Error::dims(format!(
            "noise of dim {} for MVN of dim {}",
            noise.len(),
            d.dim()
        )));
    }
    let l = d.chol.l();
    Ok((0..d.dim())
        .map(|i| d.mean[i] + dot(&l.row(i)[..=i], &noise[..=i]))
        .collect())
}

/// `ln N(x; mean, var)` for a scalar Gaussian.
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + var.ln() + r * r / var)
}

pub(crate) fn ln_2pi() -> f64 {
    LN_2PI
}
