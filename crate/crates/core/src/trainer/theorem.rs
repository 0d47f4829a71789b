use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LohaError, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::signals::{neighbor_difference, normalized_features, Composition};
use crate::spectral::{chebyshev_basis_values, chebyshev_eval, DenseSpectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremConfig {
    /// Feature dimension f.
    pub feature_dim: usize,
    /// Feature bound B; entries are drawn uniformly from [−B, B].
    pub bound: f64,
    pub samples: usize,
    pub node: usize,
    pub t_grid: Vec<f64>,
    pub seed: u64,
    pub lambda_max: f64,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        TheoremConfig {
            feature_dim: 4,
            bound: 1.0,
            samples: 100_000,
            node: 0,
            t_grid: (1..=20).map(|i| 0.25 * i as f64).collect(),
            seed: 0,
            lambda_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    /// Empirical `P(‖C_i − E[C_i]‖₂ ≥ t)`.
    pub tail: f64,
    pub bound: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub composition: String,
    pub node: usize,
    pub degree: usize,
    /// Largest |eigenvalue| of the composite filter.
    pub max_response: f64,
    pub rows: Vec<TailRow>,
    pub all_pass: bool,
}

/// Tail bound `2 f exp(−d t² / (2 λ′⁴ B² f))`.
pub fn tail_bound(f: usize, bound: f64, degree: usize, max_response: f64, t: f64) -> f64 {
    let f = f as f64;
    2.0 * f * (-(degree as f64) * t * t / (2.0 * max_response.powi(4) * bound * bound * f)).exp()
}

fn combined(w_low: &[f64], w_high: &[f64], composition: Composition) -> Result<Vec<f64>> {
    if w_low.len() != w_high.len() || w_low.is_empty() {
        return Err(LohaError::Precondition(format!(
            "filters disagree on order: {} vs {} coefficients",
            w_low.len(),
            w_high.len()
        )));
    }
    Ok(w_low
        .iter()
        .zip(w_high)
        .map(|(l, h)| match composition {
            Composition::Subtract => l - h,
            Composition::Add => l + h,
        })
        .collect())
}

/// Row `node` of the linear map `X ↦ Σ_k w_k T_k(P) Δ(X)` whose absolute
/// value is the composite feature of that node.
pub fn composite_row(
    g: &Graph,
    w_low: &[f64],
    w_high: &[f64],
    composition: Composition,
    node: usize,
    lambda_max: f64,
) -> Result<Vec<f64>> {
    let n = g.num_nodes();
    if node >= n {
        return Err(LohaError::Input(format!("node {node} out of range for {n} nodes")));
    }
    let w = combined(w_low, w_high, composition)?;
    let op = g.propagation_operator(lambda_max)?;
    let delta = neighbor_difference(g, &normalized_features(g, &Matrix::identity(n))?)?;
    let basis = chebyshev_basis_values(&op, &delta, w.len() - 1)?;
    Ok((0..n)
        .map(|c| basis.iter().zip(&w).map(|(b, wk)| wk * b[(node, c)]).sum())
        .collect())
}

/// Monte Carlo check of the concentration bound for one composition of
/// two Chebyshev filters.
pub fn check_concentration(
    g: &Graph,
    w_low: &[f64],
    w_high: &[f64],
    composition: Composition,
    cfg: &TheoremConfig,
) -> Result<TheoremReport> {
    if !(cfg.bound > 0.0 && cfg.bound.is_finite()) {
        return Err(LohaError::param("B", format!("must be positive, got {}", cfg.bound)));
    }
    if cfg.feature_dim == 0 {
        return Err(LohaError::param("f", "feature dimension must be >= 1"));
    }
    if cfg.samples < 10_000 {
        return Err(LohaError::param("samples", format!("need at least 10^4, got {}", cfg.samples)));
    }
    if let Some(t) = cfg.t_grid.iter().find(|t| !(**t > 0.0)) {
        return Err(LohaError::param("t", format!("grid values must be positive, got {t}")));
    }
    if cfg.node >= g.num_nodes() {
        return Err(LohaError::Input(format!(
            "node {} out of range for {} nodes",
            cfg.node,
            g.num_nodes()
        )));
    }
    let degree = g.degree(cfg.node);
    if degree == 0 {
        return Err(LohaError::Precondition(format!("node {} is isolated", cfg.node)));
    }
    let row = composite_row(g, w_low, w_high, composition, cfg.node, cfg.lambda_max)?;
    let w = combined(w_low, w_high, composition)?;
    let lm = cfg.lambda_max;
    let max_response = DenseSpectrum::of(g)?.max_abs_response(|l| chebyshev_eval(&w, 1.0 - 2.0 * l / lm));

    let support: Vec<(usize, f64)> = row
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect();
    let f = cfg.feature_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut values = vec![0.0; cfg.samples * f];
    for s in 0..cfg.samples {
        let out = &mut values[s * f..(s + 1) * f];
        for &(_, coef) in &support {
            for o in out.iter_mut() {
                *o += coef * rng.random_range(-cfg.bound..=cfg.bound);
            }
        }
        for o in out.iter_mut() {
            *o = o.abs();
        }
    }
    let mut mean = vec![0.0; f];
    for s in 0..cfg.samples {
        for (m, v) in mean.iter_mut().zip(&values[s * f..(s + 1) * f]) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= cfg.samples as f64;
    }
    let dev: Vec<f64> = (0..cfg.samples)
        .map(|s| {
            values[s * f..(s + 1) * f]
                .iter()
                .zip(&mean)
                .map(|(v, m)| (v - m) * (v - m))
                .sum::<f64>()
                .sqrt()
        })
        .collect();

    let rows: Vec<TailRow> = cfg
        .t_grid
        .iter()
        .map(|&t| {
            let tail = dev.iter().filter(|&&d| d >= t).count() as f64 / cfg.samples as f64;
            let bound = tail_bound(f, cfg.bound, degree, max_response, t);
            TailRow {
                t,
                tail,
                bound,
                passes: tail <= bound,
            }
        })
        .collect();
    Ok(TheoremReport {
        composition: match composition {
            Composition::Subtract => "subtract".into(),
            Composition::Add => "add".into(),
        },
        node: cfg.node,
        degree,
        max_response,
        all_pass: rows.iter().all(|r| r.passes),
        rows,
    })
}

/// Circulant graph on `n` nodes joining each node to the `reach` nearest
/// nodes on either side; every node has degree `2·reach`.
pub fn ring_lattice(n: usize, reach: usize) -> Result<Graph> {
    if reach == 0 || 2 * reach >= n {
        return Err(LohaError::param("reach", format!("need 1 <= reach < n/2, got {reach} for n = {n}")));
    }
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (1..=reach).map(move |s| (i, (i + s) % n)))
        .collect();
    Ok(Graph::from_edges(&edges, Matrix::zeros(n, 1), None)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::interp_weights_values;

    fn quick() -> TheoremConfig {
        TheoremConfig {
            samples: 20_000,
            ..TheoremConfig::default()
        }
    }

    #[test]
    fn bound_formula() {
        let b = tail_bound(4, 1.0, 8, 1.0, 1.0);
        assert!((b - 8.0 * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn identity_row_is_neighbor_difference() {
        let g = ring_lattice(10, 2).unwrap();
        let ones = interp_weights_values(&[1.0; 4]).unwrap();
        let zeros = vec![0.0; 4];
        let row = composite_row(&g, &ones, &zeros, Composition::Subtract, 0, 2.0).unwrap();
        let s = 0.5;
        let expect = [s, -s, -s, 0.0, 0.0, 0.0, 0.0, 0.0, -s, -s];
        for (a, b) in row.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn large_t_passes_vacuously() {
        let g = ring_lattice(16, 2).unwrap();
        let ones = interp_weights_values(&[1.0; 4]).unwrap();
        let zeros = vec![0.0; 4];
        let cfg = TheoremConfig { t_grid: vec![0.01], ..quick() };
        let r = check_concentration(&g, &ones, &zeros, Composition::Subtract, &cfg).unwrap();
        assert!(r.rows[0].bound > 1.0);
        assert!(r.all_pass);
    }

    #[test]
    fn parameter_errors() {
        let g = ring_lattice(16, 2).unwrap();
        let w = vec![1.0, 0.0];
        let z = vec![0.0, 0.0];
        for cfg in [
            TheoremConfig { bound: 0.0, ..quick() },
            TheoremConfig { feature_dim: 0, ..quick() },
            TheoremConfig { samples: 100, ..quick() },
            TheoremConfig { t_grid: vec![-1.0], ..quick() },
        ] {
            assert!(matches!(
                check_concentration(&g, &w, &z, Composition::Subtract, &cfg),
                Err(LohaError::Parameter { .. })
            ));
        }
        assert!(ring_lattice(4, 2).is_err());
    }
}
