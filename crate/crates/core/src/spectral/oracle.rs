//! Dense eigendecomposition of L̃, for checking the polynomial path.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{LohaError, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

pub const ORACLE_MAX_NODES: usize = 512;

/// Eigenpairs of the normalized Laplacian, `L̃ = U Λ Uᵀ`.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl DenseSpectrum {
    pub fn of(g: &Graph) -> Result<Self> {
        let n = g.num_nodes();
        if n > ORACLE_MAX_NODES {
            return Err(LohaError::Usage(format!(
                "dense oracle limited to {ORACLE_MAX_NODES} nodes, graph has {n}"
            )));
        }
        let lap = g.normalized_laplacian().to_dense();
        let dense = DMatrix::from_row_slice(n, n, lap.as_slice());
        let eig = SymmetricEigen::new(dense);
        Ok(DenseSpectrum {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    /// `U diag(g(λ)) Uᵀ` as a dense matrix.
    pub fn filter_matrix(&self, response: impl Fn(f64) -> f64) -> Matrix {
        let n = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for (c, &l) in self.eigenvalues.iter().enumerate() {
            let gl = response(l);
            scaled.column_mut(c).scale_mut(gl);
        }
        let m = scaled * self.eigenvectors.transpose();
        Matrix::from_fn(n, n, |r, c| m[(r, c)])
    }

    /// `max_i |g(λ_i)|`, the largest eigenvalue magnitude of the filter.
    pub fn max_abs_response(&self, response: impl Fn(f64) -> f64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&l| response(l).abs())
            .fold(0.0, f64::max)
    }
}

/// `U g(Λ) Uᵀ X` by full eigendecomposition.
pub fn dense_filter_oracle(g: &Graph, response: impl Fn(f64) -> f64, x: &Matrix) -> Result<Matrix> {
    DenseSpectrum::of(g)?.filter_matrix(response).matmul(x)
}
