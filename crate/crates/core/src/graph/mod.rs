//! Undirected graphs in CSR form, normalized operators, homophily and
//! data ingestion.

mod io;
mod sbm;
mod sparse;

pub use io::{load_geom_gcn, load_graph, write_graph};
pub use sbm::{generate_sbm, SbmSpec};
pub use sparse::SparseOperator;

use log::warn;

use crate::error::{LohaError, Result};
use crate::matrix::Matrix;

/// Immutable simple undirected graph with node features and optional labels.
///
/// Both directions of every edge are stored, so `neighbors(i)` is the full
/// 1-hop neighborhood of `i`.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    features: Matrix,
    labels: Option<Vec<usize>>,
}

/// Counts of edge-list entries dropped while building a [`Graph`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeStats {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list. Direction is ignored,
    /// duplicate edges and self-loops are dropped.
    pub fn from_edges(
        edges: &[(usize, usize)],
        features: Matrix,
        labels: Option<Vec<usize>>,
    ) -> Result<(Graph, EdgeStats)> {
        let n = features.rows();
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(LohaError::Input(format!(
                    "{} labels for {n} nodes",
                    l.len()
                )));
            }
        }
        let mut stats = EdgeStats::default();
        let mut pairs = Vec::with_capacity(edges.len());
        for (line, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(LohaError::Input(format!(
                    "edge {line} ({a}, {b}) references a node >= node count {n}"
                )));
            }
            if a == b {
                stats.self_loops += 1;
                continue;
            }
            pairs.push((a.min(b), a.max(b)));
        }
        let before = pairs.len();
        pairs.sort_unstable();
        pairs.dedup();
        stats.duplicates = before - pairs.len();
        if stats.self_loops > 0 || stats.duplicates > 0 {
            warn!(
                "dropped {} self-loops and {} duplicate edges",
                stats.self_loops, stats.duplicates
            );
        }

        let mut degree = vec![0usize; n];
        for &(a, b) in &pairs {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + degree[i];
        }
        let mut fill = row_ptr.clone();
        let mut col_idx = vec![0usize; row_ptr[n]];
        for &(a, b) in &pairs {
            col_idx[fill[a]] = b;
            fill[a] += 1;
            col_idx[fill[b]] = a;
            fill[b] += 1;
        }
        for i in 0..n {
            col_idx[row_ptr[i]..row_ptr[i + 1]].sort_unstable();
        }
        let isolated = degree.iter().filter(|&&d| d == 0).count();
        if isolated > 0 {
            warn!("{isolated} isolated nodes; their normalized rows are zero");
        }
        Ok((
            Graph {
                n,
                row_ptr,
                col_idx,
                features,
                labels,
            },
            stats,
        ))
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    /// `1/sqrt(d_i)`, or 0 for isolated nodes.
    pub fn inv_sqrt_degrees(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| match self.degree(i) {
                0 => 0.0,
                d => 1.0 / (d as f64).sqrt(),
            })
            .collect()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// Each undirected edge once, as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| j > i)
                .map(move |&j| (i, j))
        })
    }

    pub fn with_labels(&self, labels: Option<Vec<usize>>) -> Result<Graph> {
        if let Some(l) = &labels {
            if l.len() != self.n {
                return Err(LohaError::Input(format!(
                    "{} labels for {} nodes",
                    l.len(),
                    self.n
                )));
            }
        }
        Ok(Graph {
            labels,
            ..self.clone()
        })
    }

    pub fn with_features(&self, features: Matrix) -> Result<Graph> {
        if features.rows() != self.n {
            return Err(LohaError::Input(format!(
                "{} feature rows for {} nodes",
                features.rows(),
                self.n
            )));
        }
        Ok(Graph {
            features,
            ..self.clone()
        })
    }

    /// Relabels nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        let mut inverse = vec![usize::MAX; self.n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= self.n || inverse[old] != usize::MAX {
                return Err(LohaError::Input("not a permutation".into()));
            }
            inverse[old] = new;
        }
        let edges: Vec<_> = self
            .edges()
            .map(|(a, b)| (inverse[a], inverse[b]))
            .collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| perm.iter().map(|&old| l[old]).collect());
        Graph::from_edges(&edges, self.features.select_rows(perm), labels).map(|(g, _)| g)
    }

    /// Â = D^{-1/2} A D^{-1/2}.
    pub fn normalized_adjacency(&self) -> SparseOperator {
        let s = self.inv_sqrt_degrees();
        let mut values = Vec::with_capacity(self.col_idx.len());
        for i in 0..self.n {
            for &j in self.neighbors(i) {
                values.push(s[i] * s[j]);
            }
        }
        SparseOperator::new(self.row_ptr.clone(), self.col_idx.clone(), values, None)
    }

    /// L̃ = I − Â, with a zero diagonal entry for isolated nodes.
    pub fn normalized_laplacian(&self) -> SparseOperator {
        let adj = self.normalized_adjacency();
        let diag = (0..self.n)
            .map(|i| if self.degree(i) == 0 { 0.0 } else { 1.0 })
            .collect();
        adj.affine(-1.0, Some(diag))
    }

    /// L̂ = 2 L̃ / λ_max − I, mapping the spectrum into [−1, 1] when
    /// `lambda_max` bounds it.
    pub fn scaled_laplacian(&self, lambda_max: f64) -> Result<SparseOperator> {
        if !(lambda_max > 0.0) || !lambda_max.is_finite() {
            return Err(LohaError::param("lambda_max", format!("must be > 0, got {lambda_max}")));
        }
        let lap = self.normalized_laplacian();
        let scale = 2.0 / lambda_max;
        let diag = lap
            .diagonal()
            .iter()
            .map(|d| scale * d - 1.0)
            .collect();
        Ok(lap.affine(scale, Some(diag)))
    }

    /// The operator the encoder propagates with: −L̂ = I − 2 L̃ / λ_max.
    ///
    /// Chebyshev node `x_j` then corresponds to eigenvalue
    /// `λ_max (1 − x_j) / 2`, so interpolation index 0 is the lowest
    /// frequency.
    pub fn propagation_operator(&self, lambda_max: f64) -> Result<SparseOperator> {
        Ok(self.scaled_laplacian(lambda_max)?.negated())
    }

    /// Fraction of edges joining nodes with the same label.
    pub fn edge_homophily(&self) -> Result<f64> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| LohaError::Precondition("edge homophily needs labels".into()))?;
        let total = self.num_edges();
        if total == 0 {
            return Err(LohaError::Precondition(
                "edge homophily undefined on a graph without edges".into(),
            ));
        }
        let same = self.edges().filter(|&(a, b)| labels[a] == labels[b]).count();
        Ok(same as f64 / total as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(edges, Matrix::zeros(n, 1), None).unwrap().0
    }

    #[test]
    fn smallest_graph_and_symmetrization() {
        let (g, stats) = Graph::from_edges(
            &[(0, 1), (1, 0), (1, 1)],
            Matrix::column(&[1.0, 2.0]),
            None,
        )
        .unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.degrees(), vec![1, 1]);
        assert_eq!(stats, EdgeStats { self_loops: 1, duplicates: 1 });
    }

    #[test]
    fn out_of_range_edge_is_input_error() {
        let err = Graph::from_edges(&[(0, 5)], Matrix::zeros(2, 1), None).unwrap_err();
        assert!(matches!(err, LohaError::Input(_)));
    }

    #[test]
    fn normalized_adjacency_values() {
        let edge = graph(2, &[(0, 1)]);
        assert_eq!(edge.normalized_adjacency().to_dense()[(0, 1)], 1.0);

        let tri = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let a = tri.normalized_adjacency().to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { 0.5 };
                assert!((a[(i, j)] - expect).abs() < 1e-15);
            }
        }

        let star = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let a = star.normalized_adjacency().to_dense();
        for leaf in 1..5 {
            assert!((a[(0, leaf)] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn laplacian_of_single_edge() {
        let g = graph(2, &[(0, 1)]);
        let l = g.normalized_laplacian().to_dense();
        assert_eq!(l.as_slice(), &[1.0, -1.0, -1.0, 1.0]);
        let s = g.scaled_laplacian(2.0).unwrap().to_dense();
        assert_eq!(s.as_slice(), &[0.0, -1.0, -1.0, 0.0]);
        assert!(g.scaled_laplacian(0.0).is_err());
        assert!(g.scaled_laplacian(-1.0).is_err());
    }

    #[test]
    fn isolated_node_convention() {
        let g = graph(3, &[(0, 1)]);
        let l = g.normalized_laplacian().to_dense();
        assert_eq!(l[(2, 2)], 0.0);
        assert_eq!(l.row(2), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn homophily_examples() {
        let tri = Graph::from_edges(&[(0, 1), (1, 2), (0, 2)], Matrix::zeros(3, 1), Some(vec![4, 4, 4]))
            .unwrap()
            .0;
        assert_eq!(tri.edge_homophily().unwrap(), 1.0);

        let edge = Graph::from_edges(&[(0, 1)], Matrix::zeros(2, 1), Some(vec![0, 1])).unwrap().0;
        assert_eq!(edge.edge_homophily().unwrap(), 0.0);

        let path = Graph::from_edges(
            &[(0, 1), (1, 2), (2, 3)],
            Matrix::zeros(4, 1),
            Some(vec![0, 0, 1, 1]),
        )
        .unwrap()
        .0;
        assert!((path.edge_homophily().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn homophily_preconditions() {
        let unlabeled = graph(2, &[(0, 1)]);
        assert!(matches!(unlabeled.edge_homophily(), Err(LohaError::Precondition(_))));
        let empty = Graph::from_edges(&[], Matrix::zeros(2, 1), Some(vec![0, 1])).unwrap().0;
        assert!(matches!(empty.edge_homophily(), Err(LohaError::Precondition(_))));
    }
}
