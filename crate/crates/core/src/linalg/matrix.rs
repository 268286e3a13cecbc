// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Clone, PartialEq)]
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
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(
                "Matrix::from_vec",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
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

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn scale_mut(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Matrix) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        self.check_same_shape(other, op)?;
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

    pub fn check_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dims(
                op,
                format!(
                    "{}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        Ok(())
    }

    pub(crate) fn require_square(&self, op: &'static str) -> Result<usize> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                op,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.rows)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::dims(
                "matvec",
                format!("{}x{} times vector of length {}", self.rows, self.cols, x.len()),
            ));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Transposed matrix-vector product `selfᵀ * y`.
    pub fn matvec_t(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::dims(
                "matvec_t",
                format!("{}x{}ᵀ times vector of length {}", self.rows, self.cols, y.len()),
            ));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Raw strided GEMM: `c = alpha * op(a) * op(b) + beta * c` with `c` row-major `m x n`.
///
/// Strides are passed explicitly so transposed operands cost nothing.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass slices whose extents cover every (row, col) the
    // strides address; `c` is row-major m x n and exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `a * b`
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::dims(
            "matmul",
            format!("{}x{} times {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    gemm(
        a.rows,
        a.cols,
        b.cols,
        1.0,
        &a.data,
        a.cols as isize,
        1,
        &b.data,
        b.cols as isize,
        1,
        0.0,
        &mut c.data,
    );
    Ok(c)
}

/// `aᵀ * b`
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::dims(
            "matmul_tn",
            format!("({}x{})ᵀ times {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut c = Matrix::zeros(a.cols, b.cols);
    gemm(
        a.cols,
        a.rows,
        b.cols,
        1.0,
        &a.data,
        1,
        a.cols as isize,
        &b.data,
        b.cols as isize,
        1,
        0.0,
        &mut c.data,
    );
    Ok(c)
}

/// `a * bᵀ`
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::dims(
            "matmul_nt",
            format!("{}x{} times ({}x{})ᵀ", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut c = Matrix::zeros(a.rows, b.rows);
    gemm(
        a.rows,
        a.cols,
        b.rows,
        1.0,
        &a.data,
        a.cols as isize,
        1,
        &b.data,
        1,
        b.cols as isize,
        0.0,
        &mut c.data,
    );
    Ok(c)
}

/// Symmetric part `(A + Aᵀ)/2`.
pub fn sym(a: &Matrix) -> Result<Matrix> {
    let n = a.require_square("sym")?;
    Ok(Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)])))
}

/// Skew part `(A − Aᵀ)/2`, exactly antisymmetric in floating point.
///
/// `sym(a) + skew(a)` reproduces `a` up to one rounding per entry.
pub fn skew(a: &Matrix) -> Result<SkewMatrix> {
    let n = a.require_square("skew")?;
    Ok(SkewMatrix(Matrix::from_fn(n, n, |i, j| {
        0.5 * (a[(i, j)] - a[(j, i)])
    })))
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    a.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖AᵀA − I‖_F`
pub fn orthogonality_drift(a: &Matrix) -> f64 {
    let Ok(mut g) = matmul_tn(a, a) else {
        return f64::INFINITY;
    };
    for i in 0..g.rows.min(g.cols) {
        g[(i, i)] -= 1.0;
    }
    frobenius_norm(&g)
}

/// A square matrix with `A = −Aᵀ` exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewMatrix(Matrix);

impl SkewMatrix {
    pub fn zeros(n: usize) -> Self {
        SkewMatrix(Matrix::zeros(n, n))
    }

    /// Accepts `a` if its symmetric part is below `tol` and stores its exact skew projection.
    pub fn try_new(a: Matrix, tol: f64) -> Result<Self> {
        let sym_norm = frobenius_norm(&sym(&a)?);
        if !(sym_norm <= tol) {
            return Err(Error::NotSkew(sym_norm));
        }
        skew(&a)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn scale(&self, s: f64) -> SkewMatrix {
        SkewMatrix(self.0.scale(s))
    }

    pub fn norm(&self) -> f64 {
        frobenius_norm(&self.0)
    }
}

/// Drift tolerance right after a polar retraction.
pub const TAU_RETRACTED: f64 = 1e-6;
/// Drift tolerance between retractions.
pub const TAU_BETWEEN: f64 = 1e-3;

/// A square matrix on (or within tolerance of) the orthogonal manifold.
///
/// Equality compares the matrix only.
#[derive(Clone, Debug)]
pub struct OrthogonalParam {
    value: Matrix,
    tolerance: f64,
}

impl PartialEq for OrthogonalParam {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl OrthogonalParam {
    pub fn identity(d: usize) -> Self {
        OrthogonalParam {
            value: Matrix::identity(d),
            tolerance: TAU_RETRACTED,
        }
    }

    /// Validates `‖XᵀX − I‖_F ≤ tolerance`.
    pub fn new(value: Matrix, tolerance: f64) -> Result<Self> {
        value.require_square("OrthogonalParam::new")?;
        let drift = orthogonality_drift(&value);
        if !(drift <= tolerance) {
            return Err(Error::Orthogonality {
                name: "value".into(),
                drift,
                tolerance,
            });
        }
        Ok(OrthogonalParam { value, tolerance })
    }

    /// Wraps without checking; used by update rules whose drift is bounded by construction.
    pub(crate) fn new_unchecked(value: Matrix, tolerance: f64) -> Self {
        OrthogonalParam { value, tolerance }
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn into_matrix(self) -> Matrix {
        self.value
    }

    pub fn dim(&self) -> usize {
        self.value.rows
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn drift(&self) -> f64 {
        orthogonality_drift(&self.value)
    }

    pub fn within_tolerance(&self) -> bool {
        self.drift() <= self.tolerance
    }
}
