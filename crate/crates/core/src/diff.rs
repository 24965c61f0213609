//! Dense matrix/vector arithmetic and the reverse-mode pieces the layer forms
//! need. There is no tape: every layer form owns a hand-written backward pass
//! built from the primitives here.
//!
//! Reductions always run left to right so results are bit-reproducible.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Dense column vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Scalar")]
pub struct Vector<T> {
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_dim("matrix data length", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_dim("matrix row length", cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
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
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

impl<T: Scalar> Vector<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![T::zero(); len],
        }
    }

    pub fn from_f64(values: &[f64]) -> Self {
        values.iter().map(|&v| T::lit(v)).collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Vector<U> {
        self.data.iter().map(|v| U::lit(v.as_f64())).collect()
    }
}

impl<T> From<Vec<T>> for Vector<T> {
    fn from(data: Vec<T>) -> Self {
        Self { data }
    }
}

impl<T> FromIterator<T> for Vector<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Self {
            data: iter.into_iter().collect(),
        }
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.data
    }
}

impl<T> DerefMut for Vector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

/// Gradients of a single layer: weights, bias and the layer input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradPair<T> {
    pub dw: Matrix<T>,
    pub db: Vector<T>,
    pub dx: Vector<T>,
}

impl<T: Scalar> GradPair<T> {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            dw: Matrix::zeros(out_dim, in_dim),
            db: Vector::zeros(out_dim),
            dx: Vector::zeros(in_dim),
        }
    }

    /// Accumulates `other` into `self` entry by entry.
    pub fn add_assign(&mut self, other: &GradPair<T>) {
        for (a, &b) in self.dw.as_mut_slice().iter_mut().zip(other.dw.as_slice()) {
            *a = *a + b;
        }
        for (a, &b) in self.db.iter_mut().zip(other.db.iter()) {
            *a = *a + b;
        }
        for (a, &b) in self.dx.iter_mut().zip(other.dx.iter()) {
            *a = *a + b;
        }
    }
}

/// `out[r] = sum_c w[r, c] * x[c]`, summed left to right. No shape checks.
#[inline]
pub(crate) fn matvec_raw<T: Scalar>(w: &Matrix<T>, x: &[T], out: &mut [T]) {
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = T::zero();
        for (&wv, &xv) in w.row(r).iter().zip(x) {
            acc = acc + wv * xv;
        }
        *o = acc;
    }
}

/// `out[c] += sum_r w[r, c] * u[r]`. No shape checks.
#[inline]
pub(crate) fn matvec_t_acc<T: Scalar>(w: &Matrix<T>, u: &[T], out: &mut [T]) {
    for (r, &ur) in u.iter().enumerate() {
        if ur == T::zero() {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(w.row(r)) {
            *o = *o + wv * ur;
        }
    }
}

/// Matrix-vector product `W x`.
pub fn matvec<T: Scalar>(w: &Matrix<T>, x: &[T]) -> Result<Vector<T>> {
    check_dim("matvec", w.cols(), x.len())?;
    let mut out = vec![T::zero(); w.rows()];
    matvec_raw(w, x, &mut out);
    let out = Vector::from(out);
    if !out.is_finite() {
        return Err(Error::Numeric("matvec produced a non-finite value".into()));
    }
    Ok(out)
}

/// Transposed product `Wᵀ u`.
pub fn matvec_transpose<T: Scalar>(w: &Matrix<T>, u: &[T]) -> Result<Vector<T>> {
    check_dim("matvec_transpose", w.rows(), u.len())?;
    let mut out = vec![T::zero(); w.cols()];
    matvec_t_acc(w, u, &mut out);
    Ok(Vector::from(out))
}

/// Outer product `u xᵀ`.
pub fn outer<T: Scalar>(u: &[T], x: &[T]) -> Matrix<T> {
    Matrix::from_fn(u.len(), x.len(), |r, c| u[r] * x[c])
}

/// Gradients of the affine map `W x + b` given the upstream gradient of its
/// output: `dW = upstream ⊗ x`, `db = upstream`, `dx = Wᵀ upstream`.
pub fn backward_affine<T: Scalar>(w: &Matrix<T>, x: &[T], upstream: &[T]) -> Result<GradPair<T>> {
    check_dim("backward_affine input", w.cols(), x.len())?;
    check_dim("backward_affine upstream", w.rows(), upstream.len())?;
    let pair = GradPair {
        dw: outer(upstream, x),
        db: Vector::from(upstream.to_vec()),
        dx: matvec_transpose(w, upstream)?,
    };
    if !(pair.dw.is_finite() && pair.dx.is_finite()) {
        return Err(Error::Numeric("affine gradient is non-finite".into()));
    }
    Ok(pair)
}

/// Central finite-difference gradient of a scalar function.
pub fn finite_diff_grad<T: Scalar, F>(f: F, x: &[T], h: T) -> Result<Vector<T>>
where
    F: Fn(&[T]) -> T,
{
    if !(h > T::zero()) {
        return Err(Error::Constraint(format!("finite-difference step must be > 0, got {h}")));
    }
    let two = T::lit(2.0);
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(Error::Numeric(format!(
                "function is non-finite near coordinate {i}"
            )));
        }
        grad.push((fp - fm) / (two * h));
    }
    Ok(Vector::from(grad))
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err<T: Scalar>(a: T, b: T, floor: T) -> T {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
