use std::f64::consts::PI;
use std::sync::Arc;

use crate::autodiff::{Tape, Var};
use crate::error::{LohaError, Result};
use crate::graph::SparseOperator;
use crate::matrix::Matrix;

/// Chebyshev nodes of `T_{K+1}`: `x_j = cos((j + ½)π / (K + 1))`, `j = 0..=K`.
/// Strictly decreasing, all inside (−1, 1).
pub fn chebyshev_nodes(order: usize) -> Result<Vec<f64>> {
    if order == 0 {
        return Err(LohaError::param("K", "polynomial order must be >= 1"));
    }
    let m = (order + 1) as f64;
    Ok((0..=order)
        .map(|j| ((j as f64 + 0.5) * PI / m).cos())
        .collect())
}

/// Eigenvalue of L̃ that interpolation node `j` samples, given the
/// propagation operator `I − 2L̃/λ_max`: `λ_j = λ_max (1 − x_j) / 2`.
pub fn node_eigenvalues(order: usize, lambda_max: f64) -> Result<Vec<f64>> {
    Ok(chebyshev_nodes(order)?
        .into_iter()
        .map(|x| lambda_max * (1.0 - x) / 2.0)
        .collect())
}

/// `T_0(x) .. T_order(x)`.
fn chebyshev_values(x: f64, order: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(order + 1);
    t.push(1.0);
    if order >= 1 {
        t.push(x);
    }
    for k in 2..=order {
        t.push(2.0 * x * t[k - 1] - t[k - 2]);
    }
    t
}

/// `Σ_k w_k T_k(x)`.
pub fn chebyshev_eval(w: &[f64], x: f64) -> f64 {
    if w.is_empty() {
        return 0.0;
    }
    chebyshev_values(x, w.len() - 1)
        .iter()
        .zip(w)
        .map(|(t, c)| t * c)
        .sum()
}

/// Matrix `M` with `w = M γ`:
/// `M[k][j] = (2 / (K + 1)) T_k(x_j)`, the `k = 0` row halved so that a
/// constant γ ≡ c interpolates to the constant polynomial c.
pub fn interp_matrix(order: usize) -> Result<Matrix> {
    let nodes = chebyshev_nodes(order)?;
    let m = (order + 1) as f64;
    let t: Vec<Vec<f64>> = nodes.iter().map(|&x| chebyshev_values(x, order)).collect();
    Ok(Matrix::from_fn(order + 1, order + 1, |k, j| {
        let c = 2.0 / m * t[j][k];
        if k == 0 {
            0.5 * c
        } else {
            c
        }
    }))
}

/// Chebyshev coefficients from interpolation values (plain numbers).
pub fn interp_weights_values(gamma: &[f64]) -> Result<Vec<f64>> {
    if gamma.len() < 2 {
        return Err(LohaError::param("gamma", "needs at least 2 interpolation values"));
    }
    let m = interp_matrix(gamma.len() - 1)?;
    Ok(m.matmul(&Matrix::column(gamma))?.into_vec())
}

/// Differentiable Chebyshev coefficients `w` ((K+1)×1) from γ ((K+1)×1).
pub fn interp_weights(tape: &mut Tape, gamma: Var) -> Result<Var> {
    let (rows, cols) = tape.value(gamma).shape();
    if cols != 1 || rows < 2 {
        return Err(LohaError::Shape {
            op: "interp_weights",
            lhs: (rows, cols),
            rhs: (rows.max(2), 1),
        });
    }
    let m = tape.constant(interp_matrix(rows - 1)?);
    tape.matmul(m, gamma)
}

/// `[T_0(P) X, …, T_K(P) X]` by the three-term recurrence.
pub fn chebyshev_basis(
    tape: &mut Tape,
    op: &Arc<SparseOperator>,
    x: Var,
    order: usize,
) -> Result<Vec<Var>> {
    let mut basis = vec![x];
    if order >= 1 {
        basis.push(tape.spmm(op, x)?);
    }
    for k in 2..=order {
        let px = tape.spmm(op, basis[k - 1])?;
        let twice = tape.scale(px, 2.0)?;
        basis.push(tape.sub(twice, basis[k - 2])?);
    }
    Ok(basis)
}

/// Plain-number version of [`chebyshev_basis`].
pub fn chebyshev_basis_values(op: &SparseOperator, x: &Matrix, order: usize) -> Result<Vec<Matrix>> {
    let mut basis = vec![x.clone()];
    if order >= 1 {
        basis.push(op.apply(x)?);
    }
    for k in 2..=order {
        let mut next = op.apply(&basis[k - 1])?.scale(2.0);
        next.axpy(-1.0, &basis[k - 2]);
        basis.push(next);
    }
    Ok(basis)
}

/// `Σ_k w_k T_k(P) X`, differentiable with respect to both `w` and `X`.
pub fn cheb_propagate(
    tape: &mut Tape,
    op: &Arc<SparseOperator>,
    x: Var,
    w: Var,
) -> Result<Var> {
    let len = tape.value(w).len();
    if len == 0 {
        return Err(LohaError::Usage("empty coefficient vector".into()));
    }
    if tape.value(x).rows() != op.dim() {
        return Err(LohaError::Shape {
            op: "cheb_propagate",
            lhs: (op.dim(), op.dim()),
            rhs: tape.value(x).shape(),
        });
    }
    let basis = chebyshev_basis(tape, op, x, len - 1)?;
    tape.weighted_sum(&basis, w)
}

/// Spectral response `g(λ) = Σ_k w_k T_k(1 − 2λ/λ_max)` of a filter
/// propagated with `I − 2L̃/λ_max`.
pub fn filter_response(w: &[f64], lambdas: &[f64], lambda_max: f64) -> Vec<f64> {
    lambdas
        .iter()
        .map(|&l| chebyshev_eval(w, 1.0 - 2.0 * l / lambda_max))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn nodes_closed_form() {
        let x = chebyshev_nodes(1).unwrap();
        assert!((x[0] - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((x[1] + FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(chebyshev_nodes(2).unwrap()[1].abs() < 1e-15);
        assert!(chebyshev_nodes(0).is_err());
        for k in 1..12 {
            let x = chebyshev_nodes(k).unwrap();
            for j in 0..=k {
                assert!((x[j] + x[k - j]).abs() < 1e-15);
                assert!(x[j].abs() < 1.0);
            }
            assert!(x.windows(2).all(|p| p[0] > p[1]));
        }
    }

    #[test]
    fn constant_gamma_gives_constant_filter() {
        for k in [1, 2, 5, 10] {
            let w = interp_weights_values(&vec![1.7; k + 1]).unwrap();
            assert!((w[0] - 1.7).abs() < 1e-14);
            assert!(w[1..].iter().all(|v| v.abs() < 1e-14), "{w:?}");
        }
    }

    #[test]
    fn identity_samples_give_t1() {
        for k in [1, 3, 10] {
            let x = chebyshev_nodes(k).unwrap();
            let w = interp_weights_values(&x).unwrap();
            for (i, v) in w.iter().enumerate() {
                let expect = if i == 1 { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-14, "k={k} w={w:?}");
            }
        }
    }

    #[test]
    fn response_interpolates_gamma_at_mapped_nodes() {
        let gamma = [0.3, -1.2, 2.0, 0.0, 0.9, 1.1];
        let w = interp_weights_values(&gamma).unwrap();
        let lam = node_eigenvalues(5, 2.0).unwrap();
        let r = filter_response(&w, &lam, 2.0);
        for (a, b) in r.iter().zip(&gamma) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_samples_respond_as_one_minus_lambda() {
        let x = chebyshev_nodes(6).unwrap();
        let w = interp_weights_values(&x).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        for (l, r) in grid.iter().zip(filter_response(&w, &grid, 2.0)) {
            assert!((r - (1.0 - l)).abs() < 1e-12);
        }
    }

    #[test]
    fn propagate_special_coefficients() {
        let (g, _) = crate::graph::Graph::from_edges(
            &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)],
            Matrix::from_fn(4, 2, |r, c| (r as f64).sin() + c as f64),
            None,
        )
        .unwrap();
        let op = Arc::new(g.scaled_laplacian(2.0).unwrap());
        let mut tape = Tape::new();
        let x = tape.constant(g.features().clone());

        let w = tape.constant(Matrix::column(&[2.5, 0.0, 0.0, 0.0]));
        let y = cheb_propagate(&mut tape, &op, x, w).unwrap();
        assert_eq!(tape.value(y), &g.features().scale(2.5));

        let w = tape.constant(Matrix::column(&[0.0, 1.0, 0.0]));
        let y = cheb_propagate(&mut tape, &op, x, w).unwrap();
        assert_eq!(tape.value(y), &op.apply(g.features()).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let op = Arc::new(SparseOperator::identity(3));
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::zeros(4, 1));
        let w = tape.constant(Matrix::column(&[1.0, 0.0]));
        assert!(matches!(
            cheb_propagate(&mut tape, &op, x, w),
            Err(LohaError::Shape { .. })
        ));
    }
}
