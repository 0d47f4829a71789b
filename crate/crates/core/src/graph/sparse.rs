use rayon::prelude::*;

use crate::error::{LohaError, Result};
use crate::matrix::Matrix;

/// Rows-times-columns count above which products fan out over threads.
const PAR_THRESHOLD: usize = 1 << 16;

/// Square sparse matrix in CSR form plus an optional dense diagonal:
/// `M = diag(d) + S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Option<Vec<f64>>,
}

impl SparseOperator {
    pub fn new(
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
        diag: Option<Vec<f64>>,
    ) -> Self {
        debug_assert_eq!(col_idx.len(), values.len());
        debug_assert_eq!(*row_ptr.last().unwrap_or(&0), col_idx.len());
        if let Some(d) = &diag {
            debug_assert_eq!(d.len() + 1, row_ptr.len());
        }
        SparseOperator {
            row_ptr,
            col_idx,
            values,
            diag,
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseOperator::new(vec![0; n + 1], Vec::new(), Vec::new(), Some(vec![1.0; n]))
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.diag.clone().unwrap_or_else(|| vec![0.0; self.dim()])
    }

    /// `scale * S` with the diagonal replaced by `diag`.
    pub fn affine(&self, scale: f64, diag: Option<Vec<f64>>) -> Self {
        SparseOperator {
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| scale * v).collect(),
            diag,
        }
    }

    pub fn negated(&self) -> Self {
        let diag = self.diag.as_ref().map(|d| d.iter().map(|v| -v).collect());
        self.affine(-1.0, diag)
    }

    fn row_into(&self, i: usize, x: &Matrix, out: &mut [f64]) {
        let cols = x.cols();
        match &self.diag {
            Some(d) if d[i] != 0.0 => {
                for (o, &v) in out.iter_mut().zip(x.row(i)) {
                    *o = d[i] * v;
                }
            }
            _ => out.iter_mut().for_each(|o| *o = 0.0),
        }
        for p in self.row_ptr[i]..self.row_ptr[i + 1] {
            let a = self.values[p];
            let xr = x.row(self.col_idx[p]);
            for c in 0..cols {
                out[c] += a * xr[c];
            }
        }
    }

    /// `M X`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if x.rows() != n {
            return Err(LohaError::Shape {
                op: "sparse_dense_matmul",
                lhs: (n, n),
                rhs: x.shape(),
            });
        }
        let cols = x.cols();
        let mut out = Matrix::zeros(n, cols);
        if cols == 0 {
            return Ok(out);
        }
        if n * cols >= PAR_THRESHOLD {
            out.as_mut_slice()
                .par_chunks_mut(cols)
                .enumerate()
                .for_each(|(i, row)| self.row_into(i, x, row));
        } else {
            for (i, row) in out.as_mut_slice().chunks_mut(cols).enumerate() {
                self.row_into(i, x, row);
            }
        }
        Ok(out)
    }

    /// `Mᵀ G`.
    pub fn apply_transpose(&self, g: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if g.rows() != n {
            return Err(LohaError::Shape {
                op: "sparse_dense_matmul_transpose",
                lhs: (n, n),
                rhs: g.shape(),
            });
        }
        let cols = g.cols();
        let mut out = Matrix::zeros(n, cols);
        if let Some(d) = &self.diag {
            for i in 0..n {
                let di = d[i];
                for (o, &v) in out.row_mut(i).iter_mut().zip(g.row(i)) {
                    *o = di * v;
                }
            }
        }
        for i in 0..n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[p];
                let j = self.col_idx[p];
                for c in 0..cols {
                    let v = g[(i, c)];
                    out[(j, c)] += a * v;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.dim();
        let mut m = Matrix::zeros(n, n);
        if let Some(d) = &self.diag {
            for i in 0..n {
                m[(i, i)] += d[i];
            }
        }
        for i in 0..n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[p])] += self.values[p];
            }
        }
        m
    }

    /// Exact check that every stored entry equals its mirror.
    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.dim() {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                let mirror = self.col_idx[self.row_ptr[j]..self.row_ptr[j + 1]]
                    .binary_search(&i)
                    .ok()
                    .map(|q| self.values[self.row_ptr[j] + q]);
                if mirror != Some(self.values[p]) {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn zero_in_zero_out() {
        let (g, _) = Graph::from_edges(&[(0, 1), (1, 2)], Matrix::zeros(3, 2), None).unwrap();
        let op = g.normalized_laplacian();
        assert_eq!(op.apply(&Matrix::zeros(3, 2)).unwrap(), Matrix::zeros(3, 2));
    }

    #[test]
    fn transpose_apply_matches_dense() {
        let (g, _) = Graph::from_edges(&[(0, 1), (1, 2), (2, 3), (0, 3)], Matrix::zeros(4, 1), None)
            .unwrap();
        // non-symmetric operator: scale rows differently via the diagonal
        let mut op = g.normalized_laplacian();
        op.values.iter_mut().enumerate().for_each(|(k, v)| *v *= 1.0 + k as f64);
        let x = Matrix::from_fn(4, 2, |r, c| (r as f64) - 0.5 * c as f64);
        let dense_t = op.to_dense().transpose();
        let expect = dense_t.matmul(&x).unwrap();
        let got = op.apply_transpose(&x).unwrap();
        for (a, b) in got.as_slice().iter().zip(expect.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_operator_is_identity() {
        let x = Matrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64);
        assert_eq!(SparseOperator::identity(3).apply(&x).unwrap(), x);
    }
}
