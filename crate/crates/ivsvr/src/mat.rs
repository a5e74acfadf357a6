//! Dense row-major matrices sized for kernel workloads.
//!
//! The online state never grows beyond a few hundred rows, so every editing
//! operation (bordering, permutation, shrinking) simply builds the new
//! matrix; each is O(n²), the same order as the arithmetic it supports.

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from a rectangular slice of rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch(row.len(), c));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    /// Takes ownership of row-major data of the given shape.
    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(data.len(), rows * cols));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row-major backing slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Matrix-vector product; `v.len()` must equal `cols`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(v.len(), self.cols));
        }
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v) {
                acc += a * b;
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Square matrix grown by one bordered row/column: `self` occupies the
    /// top-left block, `edge` the new off-diagonal row and column, and
    /// `corner` the new diagonal element.
    pub fn bordered(&self, edge: &[f64], corner: f64) -> Result<Self> {
        debug_assert!(self.is_square());
        let n = self.rows;
        if edge.len() != n {
            return Err(Error::DimensionMismatch(edge.len(), n));
        }
        let m = n + 1;
        let mut out = Matrix::zeros(m, m);
        for i in 0..n {
            out.data[i * m..i * m + n].copy_from_slice(self.row(i));
            out.data[i * m + n] = edge[i];
            out.data[n * m + i] = edge[i];
        }
        out.data[n * m + n] = corner;
        Ok(out)
    }

    /// Square matrix with row/column `i` moved to the last slot by a
    /// symmetric permutation that preserves the relative order of all other
    /// rows/columns.
    pub fn rotated_to_last(&self, i: usize) -> Result<Self> {
        debug_assert!(self.is_square());
        let n = self.rows;
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, dim: n });
        }
        // perm[k] = source index providing row/col k of the output.
        let perm: Vec<usize> = (0..n).filter(|&k| k != i).chain(std::iter::once(i)).collect();
        let mut out = Matrix::zeros(n, n);
        for (a, &pa) in perm.iter().enumerate() {
            for (b, &pb) in perm.iter().enumerate() {
                out.data[a * n + b] = self.at(pa, pb);
            }
        }
        Ok(out)
    }

    /// Square matrix with the last row and column dropped.
    pub fn shrunk(&self) -> Self {
        debug_assert!(self.is_square() && self.rows >= 1);
        let n = self.rows - 1;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            out.row_mut(i).copy_from_slice(&self.row(i)[..n]);
        }
        out
    }

    /// `max |self * other − I|` over all elements; both must be square and
    /// of equal order.
    pub fn max_abs_residual(&self, other: &Matrix) -> f64 {
        debug_assert!(self.is_square() && other.is_square() && self.rows == other.rows);
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let row = self.row(i);
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += row[k] * other.at(k, j);
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - target).abs());
            }
        }
        worst
    }

    /// Inverse of a square matrix by Gauss-Jordan elimination with partial
    /// pivoting; `None` when numerically singular.
    pub fn inverse(&self) -> Option<Matrix> {
        debug_assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Matrix::identity(n);
        for col in 0..n {
            // Pivot on the largest remaining entry in this column.
            let mut pivot = col;
            let mut best = a.at(col, col).abs();
            for r in col + 1..n {
                let v = a.at(r, col).abs();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            if pivot != col {
                swap_rows(&mut a, col, pivot);
                swap_rows(&mut inv, col, pivot);
            }
            let p = a.at(col, col);
            for j in 0..n {
                let v = a.at(col, j) / p;
                a.set(col, j, v);
                let w = inv.at(col, j) / p;
                inv.set(col, j, w);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a.at(r, col);
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let v = a.at(r, j) - f * a.at(col, j);
                    a.set(r, j, v);
                    let w = inv.at(r, j) - f * inv.at(col, j);
                    inv.set(r, j, w);
                }
            }
        }
        Some(inv)
    }
}

fn swap_rows(m: &mut Matrix, a: usize, b: usize) {
    if a == b {
        return;
    }
    let cols = m.cols;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let (head, tail) = m.data.split_at_mut(hi * cols);
    head[lo * cols..(lo + 1) * cols].swap_with_slice(&mut tail[..cols]);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bordered_places_edge_and_corner() {
        let m = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let b = m.bordered(&[0.5], 2.0).unwrap();
        assert_eq!(b.rows(), 2);
        assert_eq!(b.at(0, 0), 1.0);
        assert_eq!(b.at(0, 1), 0.5);
        assert_eq!(b.at(1, 0), 0.5);
        assert_eq!(b.at(1, 1), 2.0);
    }

    #[test]
    fn rotation_preserves_relative_order() {
        // 3x3 with distinct entries; rotating index 0 to the back must put
        // former rows (1, 2, 0) in that order.
        let m = Matrix::from_rows(&[
            vec![11.0, 12.0, 13.0],
            vec![12.0, 22.0, 23.0],
            vec![13.0, 23.0, 33.0],
        ])
        .unwrap();
        let r = m.rotated_to_last(0).unwrap();
        assert_eq!(r.at(0, 0), 22.0);
        assert_eq!(r.at(0, 1), 23.0);
        assert_eq!(r.at(0, 2), 12.0);
        assert_eq!(r.at(2, 2), 11.0);
        assert_eq!(r.at(1, 2), 13.0);
    }

    #[test]
    fn inverse_matches_hand_2x2() {
        // [[1, 0.5], [0.5, 1]] has inverse [[4/3, -2/3], [-2/3, 4/3]].
        let m = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let inv = m.inverse().unwrap();
        assert!((inv.at(0, 0) - 4.0 / 3.0).abs() < 1e-14);
        assert!((inv.at(0, 1) + 2.0 / 3.0).abs() < 1e-14);
        assert!((inv.at(1, 0) + 2.0 / 3.0).abs() < 1e-14);
        assert!((inv.at(1, 1) - 4.0 / 3.0).abs() < 1e-14);
        assert!(m.max_abs_residual(&inv) < 1e-14);
    }

    #[test]
    fn singular_matrix_has_no_inverse() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(m.inverse().is_none());
    }

    #[test]
    fn residual_of_identity_is_zero() {
        let id = Matrix::identity(4);
        assert_eq!(id.max_abs_residual(&id), 0.0);
    }
}
