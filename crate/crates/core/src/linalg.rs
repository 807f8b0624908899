//! Small dense linear algebra for p×p systems.
//!
//! The regression parameter is low dimensional, so the routines here favour
//! clarity over blocking or SIMD.

use std::ops::{Index, IndexMut};

use serde::Serialize;

use crate::error::{PlmError, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
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

    /// Build from a flat row-major buffer.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(PlmError::Dimension(format!(
                "buffer of length {} cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(PlmError::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Self { rows: rows.len(), cols, data })
    }

    /// Single-column matrix.
    pub fn column_vector(values: &[T]) -> Self {
        Self { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[T]) {
        for (i, v) in values.iter().enumerate() {
            self[(i, j)] = *v;
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(PlmError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn scale(&self, factor: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * factor).collect() }
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrize(&self) -> Self {
        let mut s = self.clone();
        let half = T::cst(0.5);
        for i in 0..self.rows {
            for j in 0..i {
                let avg = (self[(i, j)] + self[(j, i)]) * half;
                s[(i, j)] = avg;
                s[(j, i)] = avg;
            }
        }
        s
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Solve `self * x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let lu = Lu::factor(self)?;
        Ok(lu.solve(b))
    }

    pub fn inverse(&self) -> Result<Self> {
        let lu = Lu::factor(self)?;
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            inv.set_column(j, &lu.solve(&e));
        }
        Ok(inv)
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<T> {
        let n = self.rows;
        let mut a = self.symmetrize();
        for _sweep in 0..100 {
            let mut off = T::zero();
            for i in 0..n {
                for j in 0..i {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            let scale: T = a.data.iter().map(|x| *x * *x).sum();
            if off <= T::epsilon() * T::epsilon() * scale || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::cst(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eig = a.diagonal();
        eig.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        eig
    }

    /// Ratio of extreme absolute eigenvalues of a symmetric matrix.
    pub fn symmetric_condition_number(&self) -> T {
        let eig = self.symmetric_eigenvalues();
        let max = eig.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        let min = eig.iter().fold(T::infinity(), |m, x| m.min(x.abs()));
        if min == T::zero() {
            T::infinity()
        } else {
            max / min
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

struct Lu<T> {
    n: usize,
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    fn factor(a: &Matrix<T>) -> Result<Self> {
        if a.rows != a.cols {
            return Err(PlmError::Dimension(format!("expected square matrix, got {}x{}", a.rows, a.cols)));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let magnitude = a.data.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        let tiny = magnitude * T::epsilon() * T::from_usize(n.max(1)).unwrap();
        for k in 0..n {
            let (pivot_row, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= tiny || pivot == T::zero() {
                return Err(PlmError::SingularDesign(format!("zero pivot in column {k} during elimination")));
            }
            if pivot_row != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, pivot_row * n + j);
                }
                perm.swap(k, pivot_row);
            }
            for i in k + 1..n {
                let factor = lu[(i, k)] / lu[(k, k)];
                lu[(i, k)] = factor;
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= factor * u;
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for k in 0..i {
                let delta = self.lu[(i, k)] * x[k];
                x[i] -= delta;
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let delta = self.lu[(i, k)] * x[k];
                x[i] -= delta;
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factor `a`; pivots below `rel_tol * max(diag)` are reported as rank deficiency.
    pub fn factor(a: &Matrix<T>, rel_tol: T) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(PlmError::Dimension("Cholesky of non-square matrix".into()));
        }
        let max_diag = a.diagonal().into_iter().fold(T::zero(), T::max);
        let threshold = rel_tol * max_diag;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= threshold || d <= T::zero() {
                return Err(PlmError::SingularDesign(format!(
                    "column {j} is (numerically) a linear combination of the others"
                )));
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.nrows();
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let delta = self.l[(i, k)] * y[k];
                y[i] -= delta;
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let delta = self.l[(k, i)] * y[k];
                y[i] -= delta;
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }
}

/// `Σ_i weight_i · row_i row_iᵀ` and `Σ_i weight_i · row_i · target_i`.
pub fn weighted_normal_equations<T: Scalar>(
    design: &Matrix<T>,
    target: &[T],
    weights: Option<&[T]>,
) -> (Matrix<T>, Vec<T>) {
    let p = design.ncols();
    let mut gram = Matrix::zeros(p, p);
    let mut rhs = vec![T::zero(); p];
    for i in 0..design.nrows() {
        let w = weights.map_or(T::one(), |w| w[i]);
        if w == T::zero() {
            continue;
        }
        let row = design.row(i);
        for a in 0..p {
            let wa = w * row[a];
            rhs[a] += wa * target[i];
            for b in 0..=a {
                gram[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    (gram, rhs)
}
