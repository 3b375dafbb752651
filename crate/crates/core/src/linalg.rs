//! Small dense and sparse matrix types.
//!
//! Agent states are stored as `n x p` matrices whose row `i` is the local
//! iterate of agent `i`; applying a weight matrix `A` to such a state is the
//! same as applying `A ⊗ I_p` to the stacked vector.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    /// Column vector (`len x 1`).
    pub fn column(values: &[T]) -> Self {
        Self { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    /// `len x len` matrix with `values` on the diagonal.
    pub fn diag(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
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
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = *d + a * s;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum()).collect()
    }

    /// `vᵀ M` as a vector.
    pub fn vec_mul(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "vec_mul shape mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + vi * a;
            }
        }
        out
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| f(a)).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|a| a * s)
    }

    /// Multiplies row `i` by `d[i]`, i.e. `diag(d) · self`.
    pub fn scale_rows(&self, d: &[T]) -> Self {
        assert_eq!(d.len(), self.rows, "scale_rows shape mismatch");
        let mut out = self.clone();
        for (i, &di) in d.iter().enumerate() {
            for v in out.row_mut(i) {
                *v = *v * di;
            }
        }
        out
    }

    pub fn column_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (s, &v) in sums.iter_mut().zip(self.row(i)) {
                *s = *s + v;
            }
        }
        sums
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows).map(|i| self.row(i).iter().copied().sum()).collect()
    }

    /// Sum of all rows (`(1ᵀ ⊗ I) x` for a stacked state).
    pub fn sum_rows(&self) -> Vec<T> {
        self.column_sums()
    }

    /// Induced infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> T {
        (0..self.rows).map(|i| self.row(i).iter().map(|v| v.abs()).sum::<T>()).fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|v| v.abs()).fold(T::zero(), T::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).abs()).fold(T::zero(), T::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self ⊗ I_p`.
    pub fn kron_identity(&self, p: usize) -> Self {
        let mut out = Self::zeros(self.rows * p, self.cols * p);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = self[(i, j)];
                if v != T::zero() {
                    for d in 0..p {
                        out[(i * p + d, j * p + d)] = v;
                    }
                }
            }
        }
        out
    }

    /// Assembles a block matrix from a grid of equally sized blocks.
    pub fn from_blocks(blocks: &[Vec<&Mat<T>>]) -> Self {
        let br = blocks.len();
        let bc = blocks[0].len();
        let (h, w) = blocks[0][0].shape();
        let mut out = Self::zeros(br * h, bc * w);
        for (bi, brow) in blocks.iter().enumerate() {
            assert_eq!(brow.len(), bc, "ragged block row");
            for (bj, blk) in brow.iter().enumerate() {
                assert_eq!(blk.shape(), (h, w), "block shape mismatch");
                for i in 0..h {
                    out.row_mut(bi * h + i)[bj * w..(bj + 1) * w].copy_from_slice(blk.row(i));
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Integer power by repeated squaring.
    pub fn pow(&self, mut k: u32) -> Self {
        assert_eq!(self.rows, self.cols, "pow needs a square matrix");
        let mut result = Self::identity(self.rows);
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = result.matmul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.matmul(&base);
            }
        }
        result
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| U::lit(v.as_f64())).collect() }
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: fmt::Debug> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[i * self.cols..(i + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

/// Compressed sparse row matrix used on the hot path of the engines.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> Csr<T> {
    pub fn from_dense(m: &Mat<T>) -> Self {
        let mut row_ptr = Vec::with_capacity(m.rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != T::zero() {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n_rows: m.rows(), n_cols: m.cols(), row_ptr, col_idx, values }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `self · x` for an `n_cols x p` state.
    pub fn apply(&self, x: &Mat<T>) -> Mat<T> {
        assert_eq!(self.n_cols, x.rows(), "sparse apply shape mismatch");
        let p = x.cols();
        let mut out = Mat::zeros(self.n_rows, p);
        for i in 0..self.n_rows {
            let dst = out.row_mut(i);
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[idx];
                let src = x.row(self.col_idx[idx]);
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = *d + a * s;
                }
            }
        }
        out
    }

    pub fn apply_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.n_cols, v.len(), "sparse apply shape mismatch");
        (0..self.n_rows)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|idx| self.values[idx] * v[self.col_idx[idx]]).sum())
            .collect()
    }
}

pub(crate) fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().map(|&a| a * a).sum::<T>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_apply_matches_dense() {
        let a = Mat::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.0, 1.0, 0.0], vec![0.25, 0.0, 0.75]]).unwrap();
        let x = Mat::from_rows(&[vec![1.0, -1.0], vec![2.0, 0.5], vec![-3.0, 4.0]]).unwrap();
        let csr = Csr::from_dense(&a);
        assert_eq!(csr.nnz(), 5);
        assert!(csr.apply(&x).max_abs_diff(&a.matmul(&x)) < 1e-15);
        assert_eq!(csr.apply_vec(&[1.0, 2.0, 3.0]), a.mul_vec(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn kron_and_blocks() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let k = a.kron_identity(2);
        assert_eq!(k.shape(), (4, 4));
        assert_eq!(k[(2, 0)], 3.0);
        assert_eq!(k[(3, 1)], 3.0);
        assert_eq!(k[(2, 1)], 0.0);
        let z = Mat::zeros(2, 2);
        let b = Mat::from_blocks(&[vec![&a, &z], vec![&z, &a]]);
        assert_eq!(b[(3, 3)], 4.0);
        assert_eq!(b[(0, 3)], 0.0);
    }

    #[test]
    fn pow_matches_repeated_product() {
        let a = Mat::from_rows(&[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let mut p = Mat::identity(2);
        for _ in 0..7 {
            p = p.matmul(&a);
        }
        assert!(a.pow(7).max_abs_diff(&p) < 1e-15);
    }
}
