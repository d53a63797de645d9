//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset must contain at least 2 examples, got {0}")]
    EmptyDataset(usize),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("row {0} has zero norm and cannot be l2-normalized")]
    ZeroRow(usize),

    #[error("all points coincide: maximum pairwise squared distance is zero")]
    DegenerateGeometry,

    #[error("k_graph must be in 1..=n-1 (n = {n}), got {k}")]
    BadKGraph { k: usize, n: usize },

    #[error("power iteration did not converge in {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("authority ascent path exceeded {0} steps; cycle detected")]
    AscentCycle(usize),

    #[error("clustering yielded {found} non-noise cluster(s); at least 2 are required (gamma={gamma}, epsilon={epsilon}, theta_min={theta_min}, k_graph={k_graph})")]
    TooFewClusters {
        found: usize,
        gamma: f64,
        epsilon: f64,
        theta_min: f64,
        k_graph: usize,
    },

    #[error("every mini-batch of an epoch produced no triplets; labels too fragmented for batch size {0}")]
    EmptyEpoch(usize),

    #[error("rank-deficient retraction: L + step*direction has numerically dependent columns")]
    RankDeficient,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("k-means requires 1 <= k <= n (k = {k}, n = {n})")]
    BadKMeansK { k: usize, n: usize },

    #[error("label vectors have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}
