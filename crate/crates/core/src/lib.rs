//! Unsupervised linear metric learning.
//!
//! The pipeline learns a discriminative Mahalanobis-like metric
//! `δ²(x, y) = ‖Lᵀ(x − y)‖²` from unlabeled feature vectors:
//!
//! 1. build a weighted directed kNN graph and compute the random-walk
//!    stationary distribution ([`graph`]);
//! 2. obtain pseudo-labels by authority ascent clustering ([`aas`]);
//! 3. mine semi-hard triplets from the pseudo-labels ([`mining`]);
//! 4. minimize a probabilistic angular loss over `(R, L)` with `LᵀL = I`
//!    by conjugate gradient on the product manifold
//!    `R^{d×l} × Grassmann(d, l)` ([`loss`], [`manifold`]);
//! 5. evaluate clustering/retrieval quality ([`eval`]).
//!
//! [`train`] wires these into full-batch and mini-batch drivers; [`io`]
//! and [`synth`] provide the file formats and the synthetic benchmark
//! used by the CLI.

pub mod aas;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod io;
pub mod loss;
pub mod manifold;
pub mod mining;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use features::FeatureMatrix;
