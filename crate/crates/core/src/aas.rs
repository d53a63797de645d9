//! Authority ascent clustering over the kNN graph.
//!
//! Each node moves uphill in the stationary probability ω through its
//! relevant neighbors until it reaches a fixed point (its authority mode);
//! nodes sharing a mode form a cluster. Clusters whose summed authority
//! falls below `theta_min`% of the total are relabeled as noise.

use crate::error::{Error, Result};
use crate::graph::{StationaryDistribution, WeightedDigraph};

/// Sentinel label for examples in filtered noise clusters.
pub const NOISE: i32 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct AasConfig {
    /// Scale γ of the stationary-gap penalty in the node relevancy.
    pub gamma: f64,
    /// Relevancy threshold ε for neighbor admission.
    pub epsilon: f64,
    /// Noise-cluster threshold, in percent of the total authority.
    pub theta_min: f64,
    /// Number of nearest neighbors in the underlying graph.
    pub k_graph: usize,
    /// Edge-weight scaling constant c.
    pub c: f64,
}

impl Default for AasConfig {
    fn default() -> Self {
        Self {
            gamma: 100.0,
            epsilon: 0.65,
            theta_min: 0.0,
            k_graph: 75,
            c: 1.0,
        }
    }
}

impl AasConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.epsilon > 1.0 {
            // With d_i the weighted out-degree, ψ ≤ W_ij ≤ 1, so every
            // relevant-neighbor set degenerates to {i}.
            log::warn!(
                "epsilon = {} > 1 makes every node its own cluster",
                self.epsilon
            );
        }
        if !(0.0..=100.0).contains(&self.theta_min) {
            return Err(Error::InvalidConfig(format!(
                "theta_min must be a percent in [0,100], got {}",
                self.theta_min
            )));
        }
        if self.k_graph == 0 {
            return Err(Error::InvalidConfig("k_graph must be >= 1".into()));
        }
        if !(self.c > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "c must be > 0, got {}",
                self.c
            )));
        }
        Ok(())
    }
}

/// Per-example pseudo-labels. Surviving labels are `0..n_clusters`,
/// ordered by descending cluster authority; filtered examples carry
/// [`NOISE`]. `mode_of[i]` is the authority mode node reached from `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<i32>,
    pub n_clusters: usize,
    pub mode_of: Vec<usize>,
}

/// Node relevancy `ψ(i,j) = d_i·T_ij·exp(-γ(ω(j)-ω(i))²)`; 0 when the
/// edge i→j is absent. Since `d_i·T_ij = W_ij`, the value lies in `[0, W_ij]`.
pub fn node_relevancy(
    g: &WeightedDigraph,
    omega: &StationaryDistribution,
    i: usize,
    j: usize,
    gamma: f64,
) -> f64 {
    let w = g.weight(i, j);
    if w == 0.0 {
        return 0.0;
    }
    let gap = omega.get(j) - omega.get(i);
    w * (-gamma * gap * gap).exp()
}

/// Relevant neighbors `N_ε(i) = {j : ψ(i,j) > ε} ∪ {i}`, ascending order.
pub fn relevant_neighbors(
    g: &WeightedDigraph,
    omega: &StationaryDistribution,
    i: usize,
    epsilon: f64,
    gamma: f64,
) -> Vec<usize> {
    let mut out: Vec<usize> = g
        .out_edges(i)
        .iter()
        .filter(|&&(j, _)| node_relevancy(g, omega, i, j, gamma) > epsilon)
        .map(|&(j, _)| j)
        .collect();
    out.push(i);
    out.sort_unstable();
    out
}

/// One authority-ascent step: the argmax of `T_ij·(ω(j)-ω(i))` over
/// `N_ε(i)\{i}`, or `i` itself when that set is empty or no step goes
/// uphill. Argmax ties break toward the smaller node index.
pub fn authority_ascent_step(
    g: &WeightedDigraph,
    omega: &StationaryDistribution,
    i: usize,
    epsilon: f64,
    gamma: f64,
) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for j in relevant_neighbors(g, omega, i, epsilon, gamma) {
        if j == i {
            continue;
        }
        let score = g.transition(i, j) * (omega.get(j) - omega.get(i));
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((j, score)),
        }
    }
    match best {
        Some((j, score)) if score > 0.0 => j,
        _ => i,
    }
}

/// Full clustering: ascend every node to its mode, group by mode, filter
/// low-authority clusters as noise, and relabel survivors contiguously by
/// descending cluster authority.
pub fn cluster(
    g: &WeightedDigraph,
    omega: &StationaryDistribution,
    cfg: &AasConfig,
) -> Result<ClusterAssignment> {
    cfg.validate()?;
    let n = g.n();
    let mut mode_of: Vec<Option<usize>> = vec![None; n];
    let mut path: Vec<usize> = Vec::new();

    for start in 0..n {
        if mode_of[start].is_some() {
            continue;
        }
        path.clear();
        let mut cur = start;
        let mode = loop {
            if let Some(m) = mode_of[cur] {
                break m;
            }
            path.push(cur);
            if path.len() > n {
                return Err(Error::AscentCycle(n));
            }
            let next = authority_ascent_step(g, omega, cur, cfg.epsilon, cfg.gamma);
            if next == cur {
                break cur;
            }
            cur = next;
        };
        for &node in &path {
            mode_of[node] = Some(mode);
        }
    }
    let mode_of: Vec<usize> = mode_of.into_iter().map(|m| m.unwrap()).collect();

    // Cluster authority: sum of member stationary probabilities.
    let mut authority: Vec<(usize, f64)> = Vec::new(); // (mode, authority)
    let mut index_of_mode = vec![usize::MAX; n];
    for i in 0..n {
        let m = mode_of[i];
        if index_of_mode[m] == usize::MAX {
            index_of_mode[m] = authority.len();
            authority.push((m, 0.0));
        }
        authority[index_of_mode[m]].1 += omega.get(i);
    }
    let total: f64 = omega.omega().iter().sum();
    let cutoff = cfg.theta_min / 100.0 * total;

    // Survivors ordered by descending authority, ties by mode index.
    let mut survivors: Vec<(usize, f64)> = authority
        .iter()
        .copied()
        .filter(|&(_, a)| a >= cutoff)
        .collect();
    survivors.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut label_of_mode = vec![NOISE; n];
    for (rank, &(mode, _)) in survivors.iter().enumerate() {
        label_of_mode[mode] = rank as i32;
    }
    let labels: Vec<i32> = mode_of.iter().map(|&m| label_of_mode[m]).collect();

    Ok(ClusterAssignment {
        labels,
        n_clusters: survivors.len(),
        mode_of,
    })
}
