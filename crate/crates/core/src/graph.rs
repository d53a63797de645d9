//! Weighted directed kNN graph and random-walk stationary distribution.
//!
//! Edge weights follow `W_ij = exp(-2c² · δ²_ij / δ²_max)` with `δ²_ij`
//! the squared Euclidean distance and `δ²_max` the exact maximum over all
//! pairs, so `0 < W_ij ≤ 1` and the graph is invariant to a positive
//! rescaling of the features.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const DEFAULT_TELEPORT: f64 = 0.01;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

/// Directed kNN graph. Each node has exactly `min(k_graph, n-1)` out-edges
/// to its nearest neighbors, no self-edges. `out_degree[i]` is the weighted
/// out-degree `d_i = Σ_j W_ij`; transition weights are `T_ij = W_ij / d_i`.
#[derive(Debug, Clone)]
pub struct WeightedDigraph {
    pub(crate) n: usize,
    pub(crate) out_edges: Vec<Vec<(usize, f64)>>,
    pub(crate) out_degree: Vec<f64>,
}

impl WeightedDigraph {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Out-edges of node `i` as `(neighbor, W_ij)`, ordered by neighbor index.
    pub fn out_edges(&self, i: usize) -> &[(usize, f64)] {
        &self.out_edges[i]
    }

    /// Weighted out-degree `d_i`.
    pub fn out_degree(&self, i: usize) -> f64 {
        self.out_degree[i]
    }

    /// Edge weight `W_ij`, or 0 when the edge is absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.out_edges[i]
            .binary_search_by(|&(nb, _)| nb.cmp(&j))
            .map(|pos| self.out_edges[i][pos].1)
            .unwrap_or(0.0)
    }

    /// Transition probability `T_ij = W_ij / d_i` (0 when the edge is absent).
    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.weight(i, j) / self.out_degree[i]
    }
}

/// Stationary distribution ω of the teleport-smoothed random walk.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    pub(crate) omega: Vec<f64>,
}

impl StationaryDistribution {
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn get(&self, i: usize) -> f64 {
        self.omega[i]
    }
}

/// Builds the directed kNN graph over the rows of `x`.
///
/// Nearest neighbors are exact (O(N²) distances), ties broken by smaller
/// index. Duplicate points get weight `exp(0) = 1`; a dataset where all
/// points coincide has `δ²_max = 0` and is rejected.
pub fn build_knn_graph(x: &FeatureMatrix, k_graph: usize, c: f64) -> Result<WeightedDigraph> {
    let n = x.n();
    if n < 2 {
        return Err(Error::EmptyDataset(n));
    }
    if k_graph == 0 || k_graph > n - 1 {
        return Err(Error::BadKGraph { k: k_graph, n });
    }
    if !(c > 0.0) {
        return Err(Error::InvalidConfig(format!("c must be > 0, got {c}")));
    }
    let k = k_graph.min(n - 1);

    // Full pairwise squared distances; also yields the exact maximum.
    let mut dist2 = vec![0.0f64; n * n];
    let mut d2_max = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = x.sq_dist(i, j);
            dist2[i * n + j] = d2;
            dist2[j * n + i] = d2;
            if d2 > d2_max {
                d2_max = d2;
            }
        }
    }
    if d2_max == 0.0 {
        return Err(Error::DegenerateGeometry);
    }

    let scale = -2.0 * c * c / d2_max;
    let mut out_edges = Vec::with_capacity(n);
    let mut out_degree = Vec::with_capacity(n);
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        // Stable sort by distance keeps the smaller-index tie rule.
        order.sort_by(|&a, &b| dist2[i * n + a].partial_cmp(&dist2[i * n + b]).unwrap());
        let mut edges: Vec<(usize, f64)> = order[..k]
            .iter()
            .map(|&j| (j, (scale * dist2[i * n + j]).exp()))
            .collect();
        edges.sort_by_key(|&(j, _)| j);
        let d_i: f64 = edges.iter().map(|&(_, w)| w).sum();
        out_edges.push(edges);
        out_degree.push(d_i);
    }

    Ok(WeightedDigraph {
        n,
        out_edges,
        out_degree,
    })
}

/// Stationary distribution of `T' = (1-teleport)·T + teleport·(1/n)·𝟙𝟙ᵀ`
/// by power iteration from the uniform vector, renormalized each sweep.
pub fn stationary_distribution(
    g: &WeightedDigraph,
    teleport: f64,
    tol: f64,
    max_iters: usize,
) -> Result<StationaryDistribution> {
    if !(0.0..1.0).contains(&teleport) {
        return Err(Error::InvalidConfig(format!(
            "teleport must be in [0,1), got {teleport}"
        )));
    }
    let n = g.n;
    let uniform = 1.0 / n as f64;
    let mut omega = vec![uniform; n];
    let mut next = vec![0.0f64; n];
    let mut residual = f64::INFINITY;

    for _ in 0..max_iters {
        next.iter_mut().for_each(|v| *v = teleport * uniform);
        for i in 0..n {
            let mass = (1.0 - teleport) * omega[i] / g.out_degree[i];
            for &(j, w) in &g.out_edges[i] {
                next[j] += mass * w;
            }
        }
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= sum);
        residual = omega
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        std::mem::swap(&mut omega, &mut next);
        if residual <= tol {
            return Ok(StationaryDistribution { omega });
        }
    }
    Err(Error::NoConvergence {
        iters: max_iters,
        residual,
    })
}

/// L1 residual `‖ωᵀT' − ωᵀ‖₁` of a candidate stationary vector.
pub fn stationary_residual(g: &WeightedDigraph, omega: &[f64], teleport: f64) -> f64 {
    let n = g.n;
    let uniform = 1.0 / n as f64;
    let mut next = vec![teleport * uniform; n];
    for i in 0..n {
        let mass = (1.0 - teleport) * omega[i] / g.out_degree[i];
        for &(j, w) in &g.out_edges[i] {
            next[j] += mass * w;
        }
    }
    omega
        .iter()
        .zip(next.iter())
        .map(|(a, b)| (a - b).abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DMatrix};

    fn features(m: DMatrix<f64>) -> FeatureMatrix {
        FeatureMatrix::new(m).unwrap()
    }

    #[test]
    fn two_point_graph_weight() {
        // The only pair attains the maximum distance, so W = exp(-2c²).
        let x = features(dmatrix![0.0; 1.0]);
        let g = build_knn_graph(&x, 1, 1.0).unwrap();
        assert_eq!(g.out_edges(0), &[(1, (-2.0f64).exp())]);
        assert_eq!(g.out_edges(1), &[(0, (-2.0f64).exp())]);
        assert!((g.weight(0, 1) - 0.1353352832366127).abs() < 1e-15);
    }

    #[test]
    fn coincident_pair_weight_one() {
        let x = features(dmatrix![0.0; 0.0; 5.0]);
        let g = build_knn_graph(&x, 1, 1.0).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 0), 1.0);
    }

    #[test]
    fn collinear_three_points_weight_table() {
        // Points at 0, 1, 3 on a line; δ²_max = 9; W = exp(-2δ²/9).
        let x = features(dmatrix![0.0; 1.0; 3.0]);
        let g = build_knn_graph(&x, 2, 1.0).unwrap();
        let w = |d2: f64| (-2.0 * d2 / 9.0).exp();
        let expect = [
            (0, 1, w(1.0)),
            (0, 2, w(9.0)),
            (1, 0, w(1.0)),
            (1, 2, w(4.0)),
            (2, 0, w(9.0)),
            (2, 1, w(4.0)),
        ];
        for (i, j, val) in expect {
            assert!((g.weight(i, j) - val).abs() < 1e-15, "edge {i}->{j}");
        }
    }

    #[test]
    fn errors() {
        let x = features(dmatrix![0.0]);
        assert!(matches!(
            build_knn_graph(&x, 1, 1.0),
            Err(Error::EmptyDataset(1))
        ));
        let x = features(dmatrix![2.0; 2.0; 2.0]);
        assert!(matches!(
            build_knn_graph(&x, 1, 1.0),
            Err(Error::DegenerateGeometry)
        ));
        let x = features(dmatrix![0.0; 1.0]);
        assert!(matches!(
            build_knn_graph(&x, 5, 1.0),
            Err(Error::BadKGraph { .. })
        ));
    }

    #[test]
    fn rows_stochastic_and_edge_counts() {
        let x = features(dmatrix![0.0, 0.0; 1.0, 0.2; 0.5, 2.0; 3.0, 1.0; 2.0, 2.0]);
        let g = build_knn_graph(&x, 3, 1.0).unwrap();
        for i in 0..g.n() {
            assert_eq!(g.out_edges(i).len(), 3);
            let row_sum: f64 = g.out_edges(i).iter().map(|&(j, _)| g.transition(i, j)).sum();
            assert!((row_sum - 1.0).abs() <= 1e-12);
            for &(j, w) in g.out_edges(i) {
                assert_ne!(i, j);
                assert!(w > 0.0 && w <= 1.0);
            }
        }
    }

    #[test]
    fn scale_invariance() {
        let base = dmatrix![0.0, 0.0; 1.0, 0.2; 0.5, 2.0; 3.0, 1.0];
        let g1 = build_knn_graph(&features(base.clone()), 2, 1.0).unwrap();
        let g2 = build_knn_graph(&features(base * 7.5), 2, 1.0).unwrap();
        for i in 0..g1.n() {
            assert_eq!(
                g1.out_edges(i).iter().map(|&(j, _)| j).collect::<Vec<_>>(),
                g2.out_edges(i).iter().map(|&(j, _)| j).collect::<Vec<_>>()
            );
            for (&(_, w1), &(_, w2)) in g1.out_edges(i).iter().zip(g2.out_edges(i)) {
                assert!((w1 - w2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stationary_two_node_symmetric() {
        let x = features(dmatrix![0.0; 1.0]);
        let g = build_knn_graph(&x, 1, 1.0).unwrap();
        let sd = stationary_distribution(&g, 0.0, 1e-12, 1000).unwrap();
        assert!((sd.get(0) - 0.5).abs() <= 1e-12);
        assert!((sd.get(1) - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn stationary_complete_graph_uniform() {
        // Unit square corners with k = n-1: symmetric weights, uniform ω.
        let x = features(dmatrix![0.0, 0.0; 1.0, 0.0; 0.0, 1.0; 1.0, 1.0]);
        let g = build_knn_graph(&x, 3, 1.0).unwrap();
        let sd = stationary_distribution(&g, 0.0, 1e-13, 10_000).unwrap();
        for i in 0..4 {
            assert!((sd.get(i) - 0.25).abs() <= 1e-12);
        }
    }

    #[test]
    fn stationary_matches_direct_solve_3x3() {
        // Oracle: left eigenvector of T' from a direct 3×3 linear solve.
        let x = features(dmatrix![0.0, 0.0; 1.0, 0.0; 0.4, 1.7]);
        let g = build_knn_graph(&x, 2, 1.0).unwrap();
        let teleport = 0.01;
        let sd = stationary_distribution(&g, teleport, 1e-13, 10_000).unwrap();

        let n = 3;
        let mut tp = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                tp[(i, j)] =
                    (1.0 - teleport) * g.transition(i, j) + teleport / n as f64;
            }
        }
        // Solve ωᵀ(T' - I) = 0 with Σω = 1: replace last equation.
        let mut a = tp.transpose() - DMatrix::identity(n, n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let b = nalgebra::dvector![0.0, 0.0, 1.0];
        let omega = a.lu().solve(&b).unwrap();
        for i in 0..n {
            assert!((sd.get(i) - omega[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn stationary_residual_within_tol() {
        let x = features(dmatrix![0.0, 0.0; 1.0, 0.2; 0.5, 2.0; 3.0, 1.0; 2.0, 2.0]);
        let g = build_knn_graph(&x, 2, 1.0).unwrap();
        let sd = stationary_distribution(&g, 0.01, 1e-10, 10_000).unwrap();
        assert!(stationary_residual(&g, sd.omega(), 0.01) <= 1e-9);
        let sum: f64 = sd.omega().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
        assert!(sd.omega().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn stationary_permutation_equivariant() {
        let base = dmatrix![0.0, 0.0; 1.0, 0.2; 0.5, 2.0; 3.0, 1.0; 2.0, 2.0; -1.0, 0.7];
        let perm = [3usize, 0, 5, 1, 4, 2];
        let mut permuted = base.clone();
        for (new_i, &old_i) in perm.iter().enumerate() {
            permuted.set_row(new_i, &base.row(old_i));
        }
        let g1 = build_knn_graph(&features(base), 3, 1.0).unwrap();
        let g2 = build_knn_graph(&features(permuted), 3, 1.0).unwrap();
        let s1 = stationary_distribution(&g1, 0.01, 1e-12, 10_000).unwrap();
        let s2 = stationary_distribution(&g2, 0.01, 1e-12, 10_000).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            assert!((s1.get(old_i) - s2.get(new_i)).abs() < 1e-10);
        }
    }
}
