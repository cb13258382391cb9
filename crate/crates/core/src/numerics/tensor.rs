use std::fmt;

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix of floating point values.
///
/// All model features and parameters are stored in this form; a scalar is a
/// 1x1 matrix. Shape violations are programming errors and abort with a
/// message naming both shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Float> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::one(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match shape {}x{}",
            data.len(),
            rows,
            cols
        );
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        for r in rows {
            assert_eq!(r.len(), cols, "ragged row in matrix literal");
        }
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn scalar(v: S) -> Self {
        Matrix::from_vec(1, 1, vec![v])
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

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_scalar(&self) -> S {
        assert_eq!((self.rows, self.cols), (1, 1), "matrix is not a scalar");
        self.data[0]
    }

    pub fn transpose(&self) -> Matrix<S> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix<S>) -> Matrix<S> {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Matrix::zeros(self.rows, other.cols);
        // i-k-j order keeps the inner loop contiguous in both operands.
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == S::zero() {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = *d + a * *s;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix<S>) -> Matrix<S> {
        assert_eq!(
            self.shape(),
            other.shape(),
            "add shape mismatch: {}x{} + {}x{}",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| *a + *b)
            .collect();
        Matrix::from_vec(self.rows, self.cols, data)
    }

    pub fn add_assign(&mut self, other: &Matrix<S>) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn scale(&self, f: S) -> Matrix<S> {
        Matrix::from_vec(self.rows, self.cols, self.data.iter().map(|v| *v * f).collect())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Matrix<S> {
        Matrix::from_vec(self.rows, self.cols, self.data.iter().map(|v| f(*v)).collect())
    }

    pub fn relu(&self) -> Matrix<S> {
        self.map(|v| if v > S::zero() { v } else { S::zero() })
    }

    pub fn sum(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, v| acc + *v)
    }

    /// Numerically stable row-wise softmax (max subtraction per row).
    pub fn softmax_rows(&self) -> Matrix<S> {
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = &mut out.data[r * self.cols..(r + 1) * self.cols];
            let max = row.iter().fold(S::neg_infinity(), |m, v| m.max(*v));
            let mut sum = S::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        out
    }

    pub fn concat_cols(parts: &[&Matrix<S>]) -> Matrix<S> {
        assert!(!parts.is_empty(), "concat_cols of zero parts");
        let rows = parts[0].rows;
        for p in parts {
            assert_eq!(
                p.rows, rows,
                "concat_cols row mismatch: {}x{} vs {}x{}",
                rows, parts[0].cols, p.rows, p.cols
            );
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                out.data[r * cols + off..r * cols + off + p.cols].copy_from_slice(p.row(r));
                off += p.cols;
            }
        }
        out
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Matrix<S> {
        assert!(
            start <= end && end <= self.cols,
            "slice_cols {}..{} out of range for {}x{}",
            start,
            end,
            self.rows,
            self.cols
        );
        let mut out = Matrix::zeros(self.rows, end - start);
        for r in 0..self.rows {
            out.data[r * (end - start)..(r + 1) * (end - start)]
                .copy_from_slice(&self.row(r)[start..end]);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix<S>) -> S {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<S: Float + fmt::Display> fmt::Display for Matrix<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self.get(r, c))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let i2 = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(i2.matmul(&m), m);
    }

    #[test]
    fn matmul_orthogonal_pick() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]);
        let b = Matrix::from_rows(&[vec![0.0], vec![5.0]]);
        assert_eq!(a.matmul(&b), Matrix::from_rows(&[vec![0.0]]));
    }

    #[test]
    #[should_panic(expected = "matmul shape mismatch: 2x3 * 2x2")]
    fn matmul_shape_mismatch_names_shapes() {
        let a = Matrix::<f64>::zeros(2, 3);
        let b = Matrix::<f64>::zeros(2, 2);
        a.matmul(&b);
    }

    #[test]
    fn relu_sign_cases() {
        let x = Matrix::from_rows(&[vec![-1.0, 0.0, 2.0]]);
        assert_eq!(x.relu(), Matrix::from_rows(&[vec![0.0, 0.0, 2.0]]));
        let neg = Matrix::from_rows(&[vec![-3.0, -0.5]]);
        assert_eq!(neg.relu(), Matrix::zeros(1, 2));
    }

    #[test]
    fn softmax_uniform_row() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0, 0.0]]);
        let s = x.softmax_rows();
        for c in 0..3 {
            assert!((s.get(0, c) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_values_no_overflow() {
        let x = Matrix::from_rows(&[vec![1000.0, 0.0]]);
        let s = x.softmax_rows();
        assert!(s.is_finite());
        assert!((s.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(s.get(0, 1) < 1e-12);
    }

    #[test]
    fn concat_cols_basic() {
        let a = Matrix::from_rows(&[vec![1.0]]);
        let b = Matrix::from_rows(&[vec![2.0]]);
        assert_eq!(
            Matrix::concat_cols(&[&a, &b]),
            Matrix::from_rows(&[vec![1.0, 2.0]])
        );
        assert_eq!(Matrix::concat_cols(&[&a]), a);
        let w = Matrix::<f64>::zeros(3, 64);
        let x = Matrix::<f64>::zeros(3, 32);
        let y = Matrix::<f64>::zeros(3, 6);
        assert_eq!(Matrix::concat_cols(&[&w, &x, &y]).cols(), 102);
    }

    #[test]
    #[should_panic(expected = "concat_cols row mismatch")]
    fn concat_cols_row_mismatch() {
        let a = Matrix::<f64>::zeros(2, 1);
        let b = Matrix::<f64>::zeros(3, 1);
        Matrix::concat_cols(&[&a, &b]);
    }
}
