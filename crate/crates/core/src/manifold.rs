//! Conjugate gradient on the product manifold `R^{d×l} × Grassmann(d, l)`.
//!
//! The Euclidean factor is flat; the Grassmann factor is handled through
//! horizontal lifts at a Stiefel representative: tangent projection
//! `(I − LLᵀ)·G`, QR retraction with a positive-diagonal sign convention,
//! and projection-based vector transport. Directions follow Polak-Ribière+
//! with Armijo backtracking.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::loss::orthogonality_error;

/// A point on the product manifold: unconstrained `R` and an orthonormal
/// Grassmann representative `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint {
    pub r: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

/// A tangent vector: free `R` direction, horizontal `L` direction
/// (`LᵀL_dir = 0` at the base point).
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTangent {
    pub r: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

impl ProductTangent {
    fn scale(&self, s: f64) -> Self {
        Self {
            r: &self.r * s,
            l: &self.l * s,
        }
    }
}

/// Product inner product: Frobenius on each factor, summed.
pub fn inner(a: &ProductTangent, b: &ProductTangent) -> f64 {
    a.r.dot(&b.r) + a.l.dot(&b.l)
}

pub fn norm(a: &ProductTangent) -> f64 {
    inner(a, a).sqrt()
}

/// Projects a Euclidean gradient pair to the tangent space at `p`:
/// the `R` part passes through, the `L` part is projected onto the
/// horizontal space `(I − LLᵀ)·G_L`.
pub fn project_tangent(p: &ProductPoint, g_r: &DMatrix<f64>, g_l: &DMatrix<f64>) -> ProductTangent {
    ProductTangent {
        r: g_r.clone(),
        l: g_l - &p.l * (p.l.transpose() * g_l),
    }
}

/// Moves along `xi` by `step`: `R + step·R_dir` on the Euclidean factor,
/// thin QR of `L + step·L_dir` (triangular factor forced to a positive
/// diagonal) on the Grassmann factor. `step = 0` returns `p` unchanged.
pub fn retract(p: &ProductPoint, xi: &ProductTangent, step: f64) -> Result<ProductPoint> {
    if step == 0.0 {
        return Ok(p.clone());
    }
    let r = &p.r + &xi.r * step;
    let l = qr_orthonormalize(&(&p.l + &xi.l * step))?;
    Ok(ProductPoint { r, l })
}

/// Q factor of a thin QR with the positive-diagonal sign convention.
/// Rejects numerically rank-deficient input.
pub fn qr_orthonormalize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let rr = qr.r();
    let tol = 1e-12 * m.norm().max(1.0);
    for j in 0..rr.ncols() {
        let diag = rr[(j, j)];
        if diag.abs() <= tol {
            return Err(Error::RankDeficient);
        }
        if diag < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Projection-based vector transport to the tangent space at `p_new`.
pub fn transport(p_new: &ProductPoint, xi: &ProductTangent) -> ProductTangent {
    project_tangent(p_new, &xi.r, &xi.l)
}

#[derive(Debug, Clone, Copy)]
pub struct RcgdOptions {
    pub maxiter: usize,
    /// Stop when the Riemannian gradient norm falls below this.
    pub tol: f64,
    pub initial_step: f64,
    pub contraction: f64,
    pub armijo_c: f64,
    pub max_halvings: usize,
}

impl Default for RcgdOptions {
    fn default() -> Self {
        Self {
            maxiter: 30,
            tol: 1e-6,
            initial_step: 1.0,
            contraction: 0.5,
            armijo_c: 1e-4,
            max_halvings: 30,
        }
    }
}

/// One accepted-iterate record of the optimization trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// Polak-Ribière+ Riemannian conjugate gradient with Armijo backtracking.
///
/// The direction resets to steepest descent when β = 0, when the current
/// direction fails to be a descent direction, and every `d·l` iterations.
/// The trace starts with the initial objective and is non-increasing over
/// accepted steps; line-search failure terminates gracefully at the best
/// point found.
pub fn rcgd<F, G>(
    loss_fn: F,
    grad_fn: G,
    init: ProductPoint,
    opts: &RcgdOptions,
) -> Result<(ProductPoint, Vec<TraceEntry>)>
where
    F: Fn(&ProductPoint) -> f64,
    G: Fn(&ProductPoint) -> (DMatrix<f64>, DMatrix<f64>),
{
    let dim = init.l.nrows() * init.l.ncols();
    let mut p = init;
    let mut f = loss_fn(&p);
    let (g_r, g_l) = grad_fn(&p);
    let mut g = project_tangent(&p, &g_r, &g_l);
    let mut g_norm = norm(&g);
    let mut dir = g.scale(-1.0);
    let mut trace = vec![TraceEntry {
        iter: 0,
        objective: f,
        grad_norm: g_norm,
        step: 0.0,
    }];

    for k in 1..=opts.maxiter {
        if g_norm <= opts.tol {
            break;
        }
        let mut slope = inner(&g, &dir);
        if slope >= 0.0 {
            dir = g.scale(-1.0);
            slope = -g_norm * g_norm;
        }

        // Armijo backtracking from the initial step.
        let mut step = opts.initial_step;
        let mut accepted: Option<(ProductPoint, f64)> = None;
        for _ in 0..=opts.max_halvings {
            match retract(&p, &dir, step) {
                Ok(candidate) => {
                    let f_new = loss_fn(&candidate);
                    if f_new <= f + opts.armijo_c * step * slope {
                        accepted = Some((candidate, f_new));
                        break;
                    }
                }
                Err(Error::RankDeficient) => {} // shrink and retry
                Err(e) => return Err(e),
            }
            step *= opts.contraction;
        }
        let Some((p_new, f_new)) = accepted else {
            break; // no sufficient decrease found; keep the best point
        };

        let (g_r, g_l) = grad_fn(&p_new);
        let g_new = project_tangent(&p_new, &g_r, &g_l);
        let g_old_t = transport(&p_new, &g);
        let diff = ProductTangent {
            r: &g_new.r - &g_old_t.r,
            l: &g_new.l - &g_old_t.l,
        };
        let denom = inner(&g, &g);
        let beta = if k % dim == 0 {
            0.0
        } else {
            (inner(&g_new, &diff) / denom).max(0.0)
        };
        let dir_t = transport(&p_new, &dir);
        dir = ProductTangent {
            r: &dir_t.r * beta - &g_new.r,
            l: &dir_t.l * beta - &g_new.l,
        };

        p = p_new;
        f = f_new;
        g = g_new;
        g_norm = norm(&g);
        trace.push(TraceEntry {
            iter: k,
            objective: f,
            grad_norm: g_norm,
            step,
        });
        debug_assert!(orthogonality_error(&p.l) <= 1e-10);
    }
    Ok((p, trace))
}
