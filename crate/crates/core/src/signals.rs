//! Dirichlet energy, spectral signal trends and the low-minus-high
//! composite feature.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{LohaError, Result};
use crate::graph::{Graph, SparseOperator};
use crate::matrix::Matrix;
use crate::spectral::{cheb_propagate, SpectralFilter};

/// Which node field the trend is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendVariant {
    /// Degree-normalized features, n×F.
    #[default]
    Full,
    /// Normalized degree-scaled row sums, n×1.
    Var1,
    /// Row sum, mean and std of the degree-scaled features, n×3.
    Var3,
}

impl TrendVariant {
    pub fn name(self) -> &'static str {
        match self {
            TrendVariant::Full => "full",
            TrendVariant::Var1 => "var1",
            TrendVariant::Var3 => "var3",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendField {
    pub values: Matrix,
    pub variant: TrendVariant,
}

fn check_rows(g: &Graph, x: &Matrix, op: &'static str) -> Result<()> {
    if x.rows() != g.num_nodes() {
        return Err(LohaError::Shape {
            op,
            lhs: (g.num_nodes(), g.num_nodes()),
            rhs: x.shape(),
        });
    }
    Ok(())
}

/// `D^{-1/2} X` (zero rows for isolated nodes).
pub fn normalized_features(g: &Graph, x: &Matrix) -> Result<Matrix> {
    check_rows(g, x, "normalized_features")?;
    let s = g.inv_sqrt_degrees();
    let mut out = x.clone();
    for (i, si) in s.iter().enumerate() {
        out.row_mut(i).iter_mut().for_each(|v| *v *= si);
    }
    Ok(out)
}

/// `½ Σ_{i,j,k} A_ij (x_ik/√d_i − x_jk/√d_j)²`, by the explicit double sum.
pub fn dirichlet_energy(g: &Graph, x: &Matrix) -> Result<f64> {
    let y = normalized_features(g, x)?;
    let mut total = 0.0;
    for i in 0..g.num_nodes() {
        for &j in g.neighbors(i) {
            total += y
                .row(i)
                .iter()
                .zip(y.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    Ok(0.5 * total)
}

/// `Δ_i = Y_i − Σ_{j ∈ N(i)} Y_j`.
pub fn neighbor_difference(g: &Graph, y: &Matrix) -> Result<Matrix> {
    check_rows(g, y, "neighbor_difference")?;
    let mut out = y.clone();
    for i in 0..g.num_nodes() {
        for &j in g.neighbors(i) {
            for (o, &v) in out.row_mut(i).iter_mut().zip(y.row(j)) {
                *o -= v;
            }
        }
    }
    Ok(out)
}

/// The per-node field whose neighbor difference defines each trend variant.
pub fn trend_input(g: &Graph, x: &Matrix, variant: TrendVariant) -> Result<Matrix> {
    let scaled = normalized_features(g, x)?;
    if variant == TrendVariant::Full {
        return Ok(scaled);
    }
    let n = g.num_nodes();
    let sums: Vec<f64> = (0..n).map(|i| scaled.row(i).iter().sum()).collect();
    let total: f64 = sums.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(LohaError::numeric(
            "spectral_trend",
            format!("sum over nodes of degree-scaled row sums is {total}; cannot normalize"),
        ));
    }
    let normalized = Matrix::column(&sums.iter().map(|s| s / total).collect::<Vec<_>>());
    if variant == TrendVariant::Var1 {
        return Ok(normalized);
    }
    if scaled.cols() < 2 {
        return Err(LohaError::Precondition(
            "the three-column trend needs at least 2 feature columns".into(),
        ));
    }
    let c = scaled.cols() as f64;
    Ok(Matrix::from_fn(n, 3, |i, k| {
        let row = scaled.row(i);
        let mean = row.iter().sum::<f64>() / c;
        match k {
            0 => normalized[(i, 0)],
            1 => mean,
            _ => (row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c).sqrt(),
        }
    }))
}

/// Unsquared neighbor-difference field fed to the composite feature.
pub fn trend_difference(g: &Graph, x: &Matrix, variant: TrendVariant) -> Result<Matrix> {
    neighbor_difference(g, &trend_input(g, x, variant)?)
}

/// Elementwise-squared neighbor difference of the variant's input field.
pub fn spectral_trend(g: &Graph, x: &Matrix, variant: TrendVariant) -> Result<TrendField> {
    let d = trend_difference(g, x, variant)?;
    Ok(TrendField {
        values: d.map(|v| v * v),
        variant,
    })
}

/// How the two filter responses are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composition {
    Subtract,
    Add,
}

/// `|Σ_k (w^l_k ∓ w^h_k) T_k(P) Δ|` for precomputed Chebyshev terms
/// `T_k(P) Δ`.
pub fn composite_from_basis(
    tape: &mut Tape,
    basis: &[Var],
    low: &SpectralFilter,
    high: &SpectralFilter,
    composition: Composition,
) -> Result<Var> {
    let w = match composition {
        Composition::Subtract => tape.sub(low.w, high.w)?,
        Composition::Add => tape.add(low.w, high.w)?,
    };
    let filtered = tape.weighted_sum(basis, w)?;
    tape.abs(filtered)
}

/// `C⁻ = |U (g^l(Λ) − g^h(Λ)) Uᵀ Δ|`, evaluated through the Chebyshev
/// recurrence on `op`.
pub fn composite_feature(
    tape: &mut Tape,
    op: &Arc<SparseOperator>,
    delta: Var,
    low: &SpectralFilter,
    high: &SpectralFilter,
) -> Result<Var> {
    if low.order != high.order {
        return Err(LohaError::Precondition(format!(
            "filters disagree on order: {} vs {}",
            low.order, high.order
        )));
    }
    let w = tape.sub(low.w, high.w)?;
    let filtered = cheb_propagate(tape, op, delta, w)?;
    tape.abs(filtered)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(a: f64, b: f64) -> Graph {
        Graph::from_edges(&[(0, 1)], Matrix::column(&[a, b]), None).unwrap().0
    }

    #[test]
    fn energy_of_zero_and_null_vector() {
        let (g, _) = Graph::from_edges(
            &[(0, 1), (1, 2), (2, 3), (1, 3)],
            Matrix::zeros(4, 1),
            None,
        )
        .unwrap();
        assert_eq!(dirichlet_energy(&g, &Matrix::zeros(4, 2)).unwrap(), 0.0);
        let sqrt_d = Matrix::column(&g.degrees().iter().map(|&d| (d as f64).sqrt()).collect::<Vec<_>>());
        assert!(dirichlet_energy(&g, &sqrt_d).unwrap().abs() < 1e-24);
    }

    #[test]
    fn edge_difference_and_trend() {
        let g = edge(3.0, -1.5);
        let d = neighbor_difference(&g, g.features()).unwrap();
        assert_eq!(d.as_slice(), &[4.5, -4.5]);
        let t = spectral_trend(&g, g.features(), TrendVariant::Full).unwrap();
        assert_eq!(t.values.as_slice(), &[20.25, 20.25]);
    }

    #[test]
    fn zero_field_and_isolated_node() {
        let (g, _) = Graph::from_edges(&[(0, 1)], Matrix::column(&[1.0, 2.0, 7.0]), None).unwrap();
        assert_eq!(neighbor_difference(&g, &Matrix::zeros(3, 2)).unwrap(), Matrix::zeros(3, 2));
        let y = Matrix::column(&[1.0, 2.0, 7.0]);
        let d = neighbor_difference(&g, &y).unwrap();
        assert_eq!(d[(2, 0)], 7.0);
        let t = spectral_trend(&g, &Matrix::zeros(3, 2), TrendVariant::Full).unwrap();
        assert!(t.values.as_slice().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn squeezed_variants_shapes() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let (g, _) = Graph::from_edges(&[(0, 1), (1, 2)], x.clone(), None).unwrap();
        let v1 = spectral_trend(&g, &x, TrendVariant::Var1).unwrap();
        assert_eq!(v1.values.shape(), (3, 1));
        let v3 = spectral_trend(&g, &x, TrendVariant::Var3).unwrap();
        assert_eq!(v3.values.shape(), (3, 3));
        let input = trend_input(&g, &x, TrendVariant::Var1).unwrap();
        assert!((input.sum() - 1.0).abs() < 1e-15);
        assert!(v3.values.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_normalizer_is_numeric_error() {
        let x = Matrix::zeros(2, 2);
        let (g, _) = Graph::from_edges(&[(0, 1)], x.clone(), None).unwrap();
        let err = spectral_trend(&g, &x, TrendVariant::Var1).unwrap_err();
        assert!(matches!(err, LohaError::Numeric { .. }), "{err}");
    }

    #[test]
    fn quadratic_homogeneity() {
        let x = Matrix::from_fn(4, 3, |r, c| (r as f64 - 1.3) * (c as f64 + 0.2));
        let (g, _) = Graph::from_edges(&[(0, 1), (1, 2), (2, 3), (0, 3)], x.clone(), None).unwrap();
        let base = spectral_trend(&g, &x, TrendVariant::Full).unwrap().values;
        let scaled = spectral_trend(&g, &x.scale(-2.5), TrendVariant::Full).unwrap().values;
        for (a, b) in base.as_slice().iter().zip(scaled.as_slice()) {
            assert!((b - 6.25 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_filters_cancel() {
        let (g, _) = Graph::from_edges(&[(0, 1), (1, 2)], Matrix::column(&[1.0, -2.0, 0.5]), None)
            .unwrap();
        let op = Arc::new(g.propagation_operator(2.0).unwrap());
        let mut tape = Tape::new();
        let delta = tape.constant(neighbor_difference(&g, g.features()).unwrap());
        let gamma = [1.0, 0.3, -0.2, 0.7];
        let a = SpectralFilter::fixed(&mut tape, &gamma).unwrap();
        let b = SpectralFilter::fixed(&mut tape, &gamma).unwrap();
        let c = composite_feature(&mut tape, &op, delta, &a, &b).unwrap();
        assert!(tape.value(c).as_slice().iter().all(|&v| v == 0.0));

        let ident = SpectralFilter::fixed(&mut tape, &[1.0; 4]).unwrap();
        let zero = SpectralFilter::fixed(&mut tape, &[0.0; 4]).unwrap();
        let c = composite_feature(&mut tape, &op, delta, &ident, &zero).unwrap();
        let expect = tape.value(delta).map(f64::abs);
        for (x, y) in tape.value(c).as_slice().iter().zip(expect.as_slice()) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
