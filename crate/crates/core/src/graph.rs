//! k-NN affinity graphs and their symmetric normalization.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PllError, Result};
use crate::numeric::{CsrMatrix, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphOptions {
    pub k: usize,
    pub metric: Metric,
    /// Replace `A` by `A ∨ Aᵀ`.
    pub symmetrize: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            k: 3,
            metric: Metric::Euclidean,
            symmetrize: false,
        }
    }
}

/// Binary adjacency `A` with unit diagonal, plus `D^{-1/2} A D^{-1/2}`.
///
/// `a_ij = 1` when example `i` is one of the `k` nearest neighbours of `j`,
/// so columns hold the in-neighbourhoods. Degrees are row sums of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    adjacency: CsrMatrix,
    normalized: CsrMatrix,
    degree: Vec<f64>,
    k: usize,
}

fn distance(metric: Metric, a: &[f64], b: &[f64], norms: Option<(f64, f64)>) -> f64 {
    match metric {
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        Metric::Cosine => {
            let (na, nb) = norms.unwrap_or((1.0, 1.0));
            if na == 0.0 || nb == 0.0 {
                return 1.0;
            }
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            1.0 - dot / (na * nb)
        }
    }
}

/// Indices of the `k` nearest rows to row `j`, excluding `j`; ties go to the lower index.
fn nearest(features: &Matrix, norms: &[f64], j: usize, k: usize, metric: Metric) -> Vec<usize> {
    let xj = features.row(j);
    let mut cand: Vec<(f64, usize)> = (0..features.rows())
        .filter(|&i| i != j)
        .map(|i| {
            let d = distance(metric, features.row(i), xj, Some((norms[i], norms[j])));
            (d, i)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand.into_iter().map(|(_, i)| i).collect()
}

pub fn build_knn_graph(features: &Matrix, k: usize) -> Result<AffinityGraph> {
    build_knn_graph_with(
        features,
        &GraphOptions {
            k,
            ..GraphOptions::default()
        },
    )
}

pub fn build_knn_graph_with(features: &Matrix, opts: &GraphOptions) -> Result<AffinityGraph> {
    let n = features.rows();
    if n == 0 {
        return Err(PllError::Validation("cannot build a graph over zero examples".into()));
    }
    if !features.is_finite() {
        return Err(PllError::NonFinite("graph features".into()));
    }
    if n > 1 && (opts.k == 0 || opts.k >= n) {
        return Err(PllError::Validation(format!(
            "neighbour count k={} must satisfy 1 <= k < n={n}",
            opts.k
        )));
    }
    let norms: Vec<f64> = features
        .rows_iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let k = if n == 1 { 0 } else { opts.k };
    let neighbours: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|j| if k == 0 { Vec::new() } else { nearest(features, &norms, j, k, opts.metric) })
        .collect();

    let mut triplets = Vec::with_capacity(n * (k + 1) * if opts.symmetrize { 2 } else { 1 });
    for (j, nb) in neighbours.iter().enumerate() {
        triplets.push((j, j, 1.0));
        for &i in nb {
            triplets.push((i, j, 1.0));
            if opts.symmetrize {
                triplets.push((j, i, 1.0));
            }
        }
    }
    let summed = CsrMatrix::from_triplets(n, n, triplets);
    // duplicates from symmetrizing collapse back to 1
    let adjacency = CsrMatrix::from_triplets(
        n,
        n,
        (0..n)
            .flat_map(|i| summed.row(i).map(move |(j, _)| (i, j, 1.0)).collect::<Vec<_>>())
            .collect(),
    );
    Ok(AffinityGraph::from_adjacency(adjacency, opts.k))
}

impl AffinityGraph {
    /// Normalizes an existing binary adjacency.
    pub fn from_adjacency(adjacency: CsrMatrix, k: usize) -> Self {
        let n = adjacency.rows();
        let degree: Vec<f64> = (0..n).map(|i| adjacency.row(i).map(|(_, v)| v).sum()).collect();
        let inv: Vec<f64> = degree.iter().map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
        let normalized = CsrMatrix::from_triplets(
            n,
            n,
            (0..n)
                .flat_map(|i| {
                    let inv = &inv;
                    adjacency.row(i).map(move |(j, v)| (i, j, v * inv[i] * inv[j])).collect::<Vec<_>>()
                })
                .collect(),
        );
        AffinityGraph {
            adjacency,
            normalized,
            degree,
            k,
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn normalized(&self) -> &CsrMatrix {
        &self.normalized
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn adjacency_dense(&self) -> Matrix {
        self.adjacency.to_dense()
    }

    pub fn normalized_dense(&self) -> Matrix {
        self.normalized.to_dense()
    }

    /// `A` restricted to `rows × rows`.
    pub fn adjacency_submatrix(&self, rows: &[usize]) -> Matrix {
        Matrix::from_fn(rows.len(), rows.len(), |a, b| self.adjacency.get(rows[a], rows[b]))
    }

    /// Writes `i j weight` lines of the normalized matrix.
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| PllError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for i in 0..self.len() {
            for (j, v) in self.normalized.row(i) {
                writeln!(w, "{i} {j} {v}").map_err(|e| PllError::io(path, e))?;
            }
        }
        w.flush().map_err(|e| PllError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_normalized(a: &Matrix) -> Matrix {
        let deg = a.row_sums();
        Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] / (deg[i] * deg[j]).sqrt())
    }

    #[test]
    fn single_point() {
        let g = build_knn_graph(&Matrix::zeros(1, 3), 3).unwrap();
        assert_eq!(g.adjacency_dense(), Matrix::identity(1));
        assert_eq!(g.normalized_dense(), Matrix::identity(1));
    }

    #[test]
    fn collinear_points() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [10.0]]).unwrap();
        let a = build_knn_graph(&x, 1).unwrap().adjacency_dense();
        // 0 is also the nearest neighbour of 1
        let expect = Matrix::from_rows(&[[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(a, expect);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [-1.0]]).unwrap();
        let a = build_knn_graph(&x, 1).unwrap().adjacency_dense();
        assert_eq!(a[(1, 0)], 1.0);
        assert_eq!(a[(2, 0)], 0.0);
    }

    #[test]
    fn k_bounds() {
        let x = Matrix::zeros(4, 2);
        assert!(build_knn_graph(&x, 4).is_err());
        assert!(build_knn_graph(&x, 0).is_err());
        assert!(build_knn_graph(&x, 3).is_ok());
    }

    #[test]
    fn normalization_matches_dense_oracle() {
        let x = Matrix::from_fn(25, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 * 0.37 - (i as f64).sin());
        for symmetrize in [false, true] {
            let g = build_knn_graph_with(
                &x,
                &GraphOptions {
                    k: 4,
                    symmetrize,
                    ..GraphOptions::default()
                },
            )
            .unwrap();
            let a = g.adjacency_dense();
            let diff = g.normalized_dense().sub(&dense_normalized(&a)).unwrap().max_abs();
            assert!(diff < 1e-12);
            if symmetrize {
                assert_eq!(a, a.transpose());
            }
            for &v in a.as_slice() {
                assert!(v == 0.0 || v == 1.0);
            }
        }
    }

    #[test]
    fn cosine_metric_uses_direction() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [10.0, 0.5], [0.9, 0.9]]).unwrap();
        let g = build_knn_graph_with(
            &x,
            &GraphOptions {
                k: 1,
                metric: Metric::Cosine,
                symmetrize: false,
            },
        )
        .unwrap();
        assert_eq!(g.adjacency_dense()[(1, 0)], 1.0);
    }

    #[test]
    fn edge_list_round_trip() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
        let g = build_knn_graph(&x, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("edges.txt");
        g.write_edge_list(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), g.adjacency().nnz());
    }
}
