//! Small dense helpers. Everything here is row-major and allocation-light;
//! the models are a couple of d×d projections, so no BLAS is involved.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

/// Floating-point element type. Training runs in `f32`; gradient checks in `f64`.
pub trait Scalar: Float + Sum + Debug + Default + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn from_f32(x: f32) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn from_f32(x: f32) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
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

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix shape mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// `self · x`
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        self.iter_rows().map(|r| dot(r, x)).collect()
    }

    /// `self += alpha · u vᵀ`
    pub fn add_outer(&mut self, alpha: T, u: &[T], v: &[T]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (i, &ui) in u.iter().enumerate() {
            let a = alpha * ui;
            for (m, &vj) in self.row_mut(i).iter_mut().zip(v) {
                *m = *m + a * vj;
            }
        }
    }

    /// Column-wise mean of the rows; `None` for an empty matrix.
    pub fn mean_row(&self) -> Option<Vec<T>> {
        if self.rows == 0 {
            return None;
        }
        let mut acc = vec![T::zero(); self.cols];
        for r in self.iter_rows() {
            for (a, &x) in acc.iter_mut().zip(r) {
                *a = *a + x;
            }
        }
        let n = T::from_f64(self.rows as f64);
        acc.iter_mut().for_each(|a| *a = *a / n);
        Some(acc)
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Unit-norm copy, or `None` when the norm is zero or not finite.
pub fn normalized<T: Scalar>(a: &[T]) -> Option<Vec<T>> {
    let n = norm(a);
    if !(n > T::zero()) || !n.is_finite() {
        return None;
    }
    Some(a.iter().map(|&x| x / n).collect())
}
