//! End-to-end training drivers.
//!
//! Full-batch: cluster once, mine semi-hard triplets over the whole set,
//! run one conjugate-gradient solve. Mini-batch: cluster once up front,
//! then per epoch shuffle into batches, re-mine inside each batch under
//! the current metric and warm-start the inner solve from the previous
//! `(R, L)`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aas::{cluster, AasConfig, ClusterAssignment};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::{
    build_knn_graph, stationary_distribution, DEFAULT_MAX_ITERS, DEFAULT_TELEPORT, DEFAULT_TOL,
};
use crate::loss::{euclid_grads, objective, orthogonality_error, MetricParams};
use crate::manifold::{qr_orthonormalize, rcgd, ProductPoint, RcgdOptions, TraceEntry};
use crate::mining::{mine_semihard_within, TripletSet};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Angular bound α in degrees.
    pub alpha_degrees: f64,
    /// Target embedding dimension l; clipped to d−1 when d ≤ this value.
    pub embedding_dim: usize,
    /// Inner conjugate-gradient iterations per solve.
    pub rcgd_maxiter: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Re-run the clustering at the start of each epoch (off by default:
    /// pseudo-labels are computed once up front).
    pub recluster_each_epoch: bool,
    pub aas: AasConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha_degrees: 45.0,
            embedding_dim: 128,
            rcgd_maxiter: 30,
            batch_size: 120,
            epochs: 1,
            seed: 0,
            recluster_each_epoch: false,
            aas: AasConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Effective embedding dimension for input dimension `d`.
    pub fn effective_l(&self, d: usize) -> Result<usize> {
        if d < 2 {
            return Err(Error::InvalidConfig(format!(
                "input dimension d = {d} is too small; need d >= 2 so l < d"
            )));
        }
        Ok(self.embedding_dim.min(d - 1))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_degrees > 0.0 && self.alpha_degrees < 90.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha_degrees must be in (0, 90), got {}",
                self.alpha_degrees
            )));
        }
        if self.embedding_dim == 0 {
            return Err(Error::InvalidConfig("embedding_dim must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        self.aas.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: MetricParams,
    pub pseudo_labels: ClusterAssignment,
    pub trace: Vec<TraceEntry>,
    pub config: TrainConfig,
}

/// Seeded initialization: `L` is the positive-diagonal Q factor of a
/// standard-normal d×l matrix and `R` starts as a copy of `L`.
pub fn init_params(d: usize, l: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if l >= d {
        return Err(Error::InvalidConfig(format!(
            "embedding dimension l = {l} must be < d = {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal: DMatrix<f64> = DMatrix::from_fn(d, l, |_, _| {
        // Box-Muller from two uniforms keeps this free of extra deps.
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    });
    let q = qr_orthonormalize(&normal)?;
    Ok((q.clone(), q))
}

/// Runs graph construction, clustering, and semi-hard mining; shared by
/// both drivers.
fn pseudo_label(x: &FeatureMatrix, cfg: &TrainConfig) -> Result<ClusterAssignment> {
    let k = cfg.aas.k_graph.min(x.n().saturating_sub(1)).max(1);
    let g = build_knn_graph(x, k, cfg.aas.c)?;
    let omega = stationary_distribution(&g, DEFAULT_TELEPORT, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    let assignment = cluster(&g, &omega, &cfg.aas)?;
    if assignment.n_clusters < 2 {
        return Err(Error::TooFewClusters {
            found: assignment.n_clusters,
            gamma: cfg.aas.gamma,
            epsilon: cfg.aas.epsilon,
            theta_min: cfg.aas.theta_min,
            k_graph: cfg.aas.k_graph,
        });
    }
    Ok(assignment)
}

fn solve(
    x: &FeatureMatrix,
    set: &TripletSet,
    start: ProductPoint,
    alpha_degrees: f64,
    maxiter: usize,
) -> Result<(ProductPoint, Vec<TraceEntry>)> {
    let x1 = x.clone();
    let x2 = x.clone();
    let set1 = set.clone();
    let set2 = set.clone();
    let loss_fn = move |p: &ProductPoint| {
        let params = MetricParams::new(p.l.clone(), p.r.clone(), alpha_degrees)
            .expect("iterates stay feasible");
        objective(&params, &set1, &x1).0
    };
    let grad_fn = move |p: &ProductPoint| {
        let params = MetricParams::new(p.l.clone(), p.r.clone(), alpha_degrees)
            .expect("iterates stay feasible");
        euclid_grads(&params, &set2, &x2)
    };
    let opts = RcgdOptions {
        maxiter,
        ..RcgdOptions::default()
    };
    rcgd(loss_fn, grad_fn, start, &opts)
}

/// Full-batch training: one clustering pass, one mining pass under the
/// initial metric, one conjugate-gradient solve.
pub fn train_opml(x: &FeatureMatrix, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let d = x.dim();
    let l_dim = cfg.effective_l(d)?;
    let assignment = pseudo_label(x, cfg)?;
    let (l0, r0) = init_params(d, l_dim, cfg.seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let set = mine_semihard_within(
        x,
        &assignment.labels,
        &(0..x.n()).collect::<Vec<_>>(),
        &l0,
        1,
        &mut rng,
    );

    let start = ProductPoint { r: r0, l: l0 };
    let (point, trace) = if set.is_empty() || cfg.rcgd_maxiter == 0 {
        let params = MetricParams::new(start.l.clone(), start.r.clone(), cfg.alpha_degrees)?;
        let (initial, _) = objective(&params, &set, x);
        (
            start,
            vec![TraceEntry {
                iter: 0,
                objective: initial,
                grad_norm: 0.0,
                step: 0.0,
            }],
        )
    } else {
        solve(x, &set, start, cfg.alpha_degrees, cfg.rcgd_maxiter)?
    };

    let params = MetricParams::new(point.l, point.r, cfg.alpha_degrees)?;
    Ok(TrainedModel {
        params,
        pseudo_labels: assignment,
        trace,
        config: cfg.clone(),
    })
}

/// Mini-batch training with warm-started inner solves.
pub fn train_sopml(x: &FeatureMatrix, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let d = x.dim();
    let l_dim = cfg.effective_l(d)?;
    let mut assignment = pseudo_label(x, cfg)?;
    let (l0, r0) = init_params(d, l_dim, cfg.seed)?;
    let mut point = ProductPoint { r: r0, l: l0 };
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let mut indices: Vec<usize> = (0..x.n()).collect();
    for epoch in 0..cfg.epochs {
        if cfg.recluster_each_epoch && epoch > 0 {
            assignment = pseudo_label(x, cfg)?;
        }
        indices.shuffle(&mut rng);
        let mut any_triplets = false;
        for batch in indices.chunks(cfg.batch_size) {
            let set = mine_semihard_within(x, &assignment.labels, batch, &point.l, 1, &mut rng);
            if set.is_empty() {
                continue; // degenerate batch; state carries unchanged
            }
            any_triplets = true;
            let (next, batch_trace) =
                solve(x, &set, point, cfg.alpha_degrees, cfg.rcgd_maxiter)?;
            debug_assert!(orthogonality_error(&next.l) <= 1e-8);
            trace.extend(batch_trace);
            point = next;
        }
        if !any_triplets {
            return Err(Error::EmptyEpoch(cfg.batch_size));
        }
    }
    if trace.is_empty() {
        trace.push(TraceEntry {
            iter: 0,
            objective: 0.0,
            grad_norm: 0.0,
            step: 0.0,
        });
    }

    let params = MetricParams::new(point.l, point.r, cfg.alpha_degrees)?;
    Ok(TrainedModel {
        params,
        pseudo_labels: assignment,
        trace,
        config: cfg.clone(),
    })
}

/// Projects the rows of `x` into the learned space: `X·L` (n×l).
pub fn embed(params: &MetricParams, x: &FeatureMatrix) -> Result<DMatrix<f64>> {
    if x.dim() != params.d() {
        return Err(Error::DimensionMismatch {
            expected: params.d(),
            got: x.dim(),
        });
    }
    Ok(x.data() * params.l())
}
