//! Dense row-major matrices and the handful of kernels the parameterizations need.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix. Vectors and batches of vectors are `n × b` matrices
/// whose columns are the individual vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Machine-independent floating-point operation counter.
///
/// Counters are owned by the caller and threaded through `*_counted` routines;
/// there is no global instrumentation state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub flops: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, n: usize) {
        self.flops += n as u64;
    }
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::eye(n, n)
    }

    /// First `cols` columns of the `rows × rows` identity.
    pub fn eye(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err(format!("{} elements", rows * cols), data.len()));
        }
        Ok(Self { rows, cols, data })
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

    pub fn column(values: &[T]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, values: &[T]) {
        for (i, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let mut ops = OpCounter::new();
        self.matmul_counted(rhs, &mut ops)
    }

    pub fn matmul_counted(&self, rhs: &Self, ops: &mut OpCounter) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(shape_err(
                format!("inner dimension {}", self.cols),
                format!("{}×{}", rhs.rows, rhs.cols),
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        T::gemm(
            self.rows,
            self.cols,
            rhs.cols,
            T::one(),
            &self.data,
            &rhs.data,
            T::zero(),
            &mut out.data,
        );
        ops.add(2 * self.rows * self.cols * rhs.cols);
        Ok(out)
    }

    /// `selfᵀ · rhs` without materializing the transpose of a tall operand twice.
    pub fn t_matmul(&self, rhs: &Self) -> Result<Self> {
        self.transpose().matmul(rhs)
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * c).collect(),
        }
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn zip_with(&self, rhs: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_shape(rhs)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `self += c * rhs`.
    pub fn axpy(&mut self, c: T, rhs: &Self) -> Result<()> {
        self.check_same_shape(rhs)?;
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn check_same_shape(&self, rhs: &Self) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(shape_err(
                format!("{}×{}", self.rows, self.cols),
                format!("{}×{}", rhs.rows, rhs.cols),
            ));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<T>())
            .fold(T::zero(), |m, v| m.max(v))
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_block(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn set_row_block(&mut self, start: usize, block: &Self) {
        debug_assert_eq!(block.cols, self.cols);
        self.data[start * self.cols..(start + block.rows) * self.cols].copy_from_slice(&block.data);
    }

    /// First `k` columns.
    pub fn first_cols(&self, k: usize) -> Self {
        Self::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    /// Vertical concatenation.
    pub fn vstack(top: &Self, bottom: &Self) -> Result<Self> {
        if top.cols != bottom.cols {
            return Err(shape_err(format!("{} columns", top.cols), bottom.cols));
        }
        let mut data = top.data.clone();
        data.extend_from_slice(&bottom.data);
        Ok(Self {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        })
    }

    /// Horizontal concatenation.
    pub fn hstack(left: &Self, right: &Self) -> Result<Self> {
        if left.rows != right.rows {
            return Err(shape_err(format!("{} rows", left.rows), right.rows));
        }
        Ok(Self::from_fn(left.rows, left.cols + right.cols, |i, j| {
            if j < left.cols {
                left[(i, j)]
            } else {
                right[(i, j - left.cols)]
            }
        }))
    }

    /// `selfᵀ · self` for a tall matrix, `self · selfᵀ` otherwise; minus the identity.
    pub fn gram_deviation(&self) -> Self {
        let gram = if self.rows > self.cols {
            self.t_matmul(self)
        } else {
            self.matmul(&self.transpose())
        }
        .expect("gram shapes agree");
        let n = gram.rows;
        let mut g = gram;
        for i in 0..n {
            g[(i, i)] -= T::one();
        }
        g
    }

    /// Solves `self · X = rhs` by LU factorization with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        let lu = Lu::factor(self)?;
        lu.solve(rhs)
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization `P·A = L·U` with partial (row) pivoting.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: Mat<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &Mat<T>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(shape_err("square matrix", format!("{}×{}", a.rows(), a.cols())));
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv, best) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -T::one()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if !(best > T::zero()) || !best.is_finite() {
                return Err(Error::Numeric(format!("singular matrix at pivot {k}")));
            }
            if piv != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, rhs: &Mat<T>) -> Result<Mat<T>> {
        let n = self.lu.rows();
        if rhs.rows() != n {
            return Err(shape_err(format!("{n} rows"), rhs.rows()));
        }
        let b = rhs.cols();
        let mut x = Mat::from_fn(n, b, |i, j| rhs[(self.perm[i], j)]);
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[(i, k)];
                if l != T::zero() {
                    for j in 0..b {
                        let v = x[(k, j)];
                        x[(i, j)] -= l * v;
                    }
                }
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[(i, k)];
                if u != T::zero() {
                    for j in 0..b {
                        let v = x[(k, j)];
                        x[(i, j)] -= u * v;
                    }
                }
            }
            let d = self.lu[(i, i)];
            for j in 0..b {
                x[(i, j)] /= d;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_pivoting_system() {
        let a = Mat::<f64>::from_vec(3, 3, vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]).unwrap();
        let x = Mat::from_vec(3, 1, vec![1.0, -2.0, 0.5]).unwrap();
        let b = a.matmul(&x).unwrap();
        let got = a.solve(&b).unwrap();
        for i in 0..3 {
            assert!((got[(i, 0)] - x[(i, 0)]).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(a.solve(&Mat::identity(2)), Err(Error::Numeric(_))));
    }

    #[test]
    fn matmul_counts_flops_and_checks_shapes() {
        let a = Mat::<f64>::eye(4, 3);
        let b = Mat::<f64>::eye(3, 2);
        let mut ops = OpCounter::new();
        let c = a.matmul_counted(&b, &mut ops).unwrap();
        assert_eq!(c.shape(), (4, 2));
        assert_eq!(ops.flops, 2 * 4 * 3 * 2);
        assert!(b.matmul(&a).is_err());
    }

    #[test]
    fn gram_deviation_of_identity_columns_is_zero() {
        let e = Mat::<f32>::eye(6, 2);
        assert_eq!(e.gram_deviation().max_abs(), 0.0);
    }
}
