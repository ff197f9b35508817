//! Weighted undirected communication graphs and their Laplacian spectra.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::{Matrix, Vector};

/// Threshold below which an eigenvalue counts as zero.
pub const TOL_EIG: f64 = 1e-9;

/// One undirected edge with 1-based agent indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl Edge {
    pub fn new(i: usize, j: usize) -> Self {
        Edge { i, j, weight: 1.0 }
    }

    pub fn weighted(i: usize, j: usize, weight: f64) -> Self {
        Edge { i, j, weight }
    }
}

/// Symmetric nonnegative adjacency with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    weights: Matrix,
}

#[derive(Debug, Clone)]
pub struct SpectralInfo {
    pub laplacian: Matrix,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub lambda2: f64,
}

impl SpectralInfo {
    pub fn lambda_max(&self) -> f64 {
        *self
            .eigenvalues
            .last()
            .expect("graph has at least two agents")
    }
}

impl Graph {
    /// Builds a graph from a dense adjacency matrix, checking every invariant.
    pub fn from_adjacency(weights: Matrix) -> Result<Self> {
        let n = weights.nrows();
        if !weights.is_square() {
            return Err(Error::InvalidGraph("adjacency matrix is not square".into()));
        }
        if n < 2 {
            return Err(Error::InvalidGraph(format!(
                "need at least 2 agents, got {n}"
            )));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!("self-loop at agent {}", i + 1)));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidGraph(format!(
                        "weight a_{},{} = {w} must be finite and nonnegative",
                        i + 1,
                        j + 1
                    )));
                }
                if w != weights[(j, i)] {
                    return Err(Error::InvalidGraph(format!(
                        "adjacency not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Graph { weights })
    }

    /// Builds a graph from an undirected edge list with 1-based indices.
    ///
    /// Self-loops, duplicate edges (in either orientation), out-of-range
    /// indices and non-positive weights are rejected.
    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!(
                "need at least 2 agents, got {n}"
            )));
        }
        let mut w = Matrix::zeros(n, n);
        for e in edges {
            if e.i == 0 || e.j == 0 || e.i > n || e.j > n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) out of range 1..={n}",
                    e.i, e.j
                )));
            }
            if e.i == e.j {
                return Err(Error::InvalidGraph(format!("self-loop at agent {}", e.i)));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has weight {}; weights must be positive",
                    e.i, e.j, e.weight
                )));
            }
            let (a, b) = (e.i - 1, e.j - 1);
            if w[(a, b)] != 0.0 {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    e.i, e.j
                )));
            }
            w[(a, b)] = e.weight;
            w[(b, a)] = e.weight;
        }
        Ok(Graph { weights: w })
    }

    /// Cycle 1-2-...-n-1 with unit weights.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGraph(format!("ring needs n >= 3, got {n}")));
        }
        let edges: Vec<Edge> = (1..=n).map(|i| Edge::new(i, i % n + 1)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<Edge> = (1..n).map(|i| Edge::new(i, i + 1)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 1..=n {
            for j in (i + 1)..=n {
                edges.push(Edge::new(i, j));
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn agent_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.weights
    }

    /// Indices `j` with `a_ij > 0`, 0-based.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.agent_count()).filter(move |&j| self.weights[(i, j)] > 0.0)
    }

    /// Edges as 1-based `(i, j, weight)` with `i < j`.
    pub fn edges(&self) -> Vec<Edge> {
        let n = self.agent_count();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.weights[(i, j)] > 0.0 {
                    out.push(Edge::weighted(i + 1, j + 1, self.weights[(i, j)]));
                }
            }
        }
        out
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> Matrix {
        let n = self.agent_count();
        let mut l = -self.weights.clone();
        for i in 0..n {
            l[(i, i)] = self.weights.row(i).sum();
        }
        l
    }

    pub fn spectrum(&self) -> Result<SpectralInfo> {
        let laplacian = self.laplacian();
        let eigenvalues = linalg::symmetric_eigenvalues(&laplacian)?;
        let lambda2 = eigenvalues[1];
        Ok(SpectralInfo {
            laplacian,
            eigenvalues,
            lambda2,
        })
    }

    /// Fails with [`Error::DisconnectedGraph`] unless the Fiedler value exceeds [`TOL_EIG`].
    pub fn assert_connected(&self) -> Result<SpectralInfo> {
        let spec = self.spectrum()?;
        if spec.lambda2 <= TOL_EIG {
            return Err(Error::DisconnectedGraph {
                lambda2: spec.lambda2,
            });
        }
        Ok(spec)
    }

    /// `x^T (L kron I_n) x`, evaluated edge-wise as `1/2 sum_ij a_ij |x_i - x_j|^2`.
    pub fn consensus_quadratic_form(&self, x: &[Vector]) -> Result<f64> {
        let n = self.agent_count();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        let dim = x[0].len();
        if let Some(bad) = x.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = self.weights[(i, j)];
                if a > 0.0 {
                    total += a * (&x[i] - &x[j]).norm_squared();
                }
            }
        }
        Ok(0.5 * total)
    }

    /// `sum_j a_ij (x_i - x_j)` for every agent.
    pub fn disagreement(&self, x: &[Vector]) -> Vec<Vector> {
        let n = self.agent_count();
        (0..n)
            .map(|i| {
                let mut acc = Vector::zeros(x[i].len());
                for j in self.neighbors(i) {
                    acc += self.weights[(i, j)] * (&x[i] - &x[j]);
                }
                acc
            })
            .collect()
    }
}

/// Laplacian of the complete graph on `n` nodes: `n I - 1 1^T`.
pub fn complete_graph_laplacian(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| if i == j { n as f64 - 1.0 } else { -1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_laplacian() {
        let g = Graph::path(2).unwrap();
        assert_eq!(
            g.laplacian(),
            Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
    }

    #[test]
    fn ring6_laplacian_by_hand() {
        let l = Graph::ring(6).unwrap().laplacian();
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i == j {
                    2.0
                } else if (i + 1) % 6 == j || (j + 1) % 6 == i {
                    -1.0
                } else {
                    0.0
                };
                assert_eq!(l[(i, j)], expected, "({i},{j})");
            }
        }
    }

    #[test]
    fn row_sums_vanish() {
        let g = Graph::from_edges(
            4,
            &[
                Edge::weighted(1, 2, 0.5),
                Edge::weighted(2, 3, 2.0),
                Edge::new(3, 4),
                Edge::weighted(1, 4, 3.5),
            ],
        )
        .unwrap();
        let l = g.laplacian();
        for i in 0..4 {
            assert!(l.row(i).sum().abs() < 1e-12);
            assert!(l.column(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_spectra() {
        let p2 = Graph::path(2).unwrap().spectrum().unwrap();
        assert!((p2.eigenvalues[0]).abs() < 1e-9);
        assert!((p2.lambda2 - 2.0).abs() < 1e-9);

        // 2 - 2 cos(2 pi k / 6)
        let ring = Graph::ring(6).unwrap().spectrum().unwrap();
        let mut expected: Vec<f64> = (0..6)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / 6.0).cos())
            .collect();
        expected.sort_by(|a, b| a.total_cmp(b));
        for (a, b) in ring.eigenvalues.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!((ring.lambda2 - 1.0).abs() < 1e-9);
        assert!((ring.lambda_max() - 4.0).abs() < 1e-9);

        let k3 = Graph::complete(3).unwrap().spectrum().unwrap();
        assert!((k3.lambda2 - 3.0).abs() < 1e-9);
    }

    #[test]
    fn connectivity() {
        assert!(Graph::ring(6).unwrap().assert_connected().is_ok());
        assert!(Graph::path(2).unwrap().assert_connected().is_ok());
        let two_edges = Graph::from_edges(4, &[Edge::new(1, 2), Edge::new(3, 4)]).unwrap();
        assert!(matches!(
            two_edges.assert_connected(),
            Err(Error::DisconnectedGraph { .. })
        ));
    }

    #[test]
    fn edge_list_rejections() {
        assert!(Graph::from_edges(3, &[Edge::new(1, 1)]).is_err());
        assert!(Graph::from_edges(3, &[Edge::new(1, 2), Edge::new(2, 1)]).is_err());
        assert!(Graph::from_edges(3, &[Edge::new(0, 2)]).is_err());
        assert!(Graph::from_edges(3, &[Edge::new(1, 4)]).is_err());
        assert!(Graph::from_edges(3, &[Edge::weighted(1, 2, -1.0)]).is_err());
        assert!(Graph::from_edges(1, &[]).is_err());
    }

    #[test]
    fn adjacency_validation() {
        let asym = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(Graph::from_adjacency(asym).is_err());
        let looped = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert!(Graph::from_adjacency(looped).is_err());
        let ok = Matrix::from_row_slice(2, 2, &[0.0, 1.5, 1.5, 0.0]);
        assert_eq!(
            Graph::from_adjacency(ok).unwrap().edges(),
            vec![Edge::weighted(1, 2, 1.5)]
        );
    }

    #[test]
    fn quadratic_form_examples() {
        let g = Graph::path(2).unwrap();
        let x = vec![Vector::from_vec(vec![0.0]), Vector::from_vec(vec![1.0])];
        assert_eq!(g.consensus_quadratic_form(&x).unwrap(), 1.0);

        let ring = Graph::ring(6).unwrap();
        let same = vec![Vector::from_vec(vec![0.3, -2.0]); 6];
        assert_eq!(ring.consensus_quadratic_form(&same).unwrap(), 0.0);

        let ragged = vec![Vector::zeros(2), Vector::zeros(3)];
        assert!(g.consensus_quadratic_form(&ragged).is_err());
        assert!(ring.consensus_quadratic_form(&same[..3]).is_err());
    }

    #[test]
    fn complete_laplacian_small() {
        assert_eq!(
            complete_graph_laplacian(2),
            Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        let k3 = complete_graph_laplacian(3);
        assert_eq!(k3, Graph::complete(3).unwrap().laplacian());
    }

    #[test]
    fn fiedler_bound_on_ring6() {
        let g = Graph::ring(6).unwrap();
        let spec = g.spectrum().unwrap();
        let diff = 6.0 * &spec.laplacian - spec.lambda2 * complete_graph_laplacian(6);
        let eig = linalg::symmetric_eigenvalues(&diff).unwrap();
        assert!(eig[0] >= -TOL_EIG);
    }
}
