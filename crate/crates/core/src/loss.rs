//! Probabilistic angular triplet loss and its Euclidean gradients.
//!
//! Per triplet: hinge value `z = δ²_L(a,p) − 4tan²α·δ²_L(n, avg)` with
//! `avg = (a+p)/2`, smoothed as `m = softplus(z)`, weighted by
//! `w = (σ(aᵀRRᵀp) + 1 − σ(avgᵀRRᵀn))/2`, and the objective is
//! `Σ softplus(w·m) = Σ −log σ(−w·m)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::mining::{anchor_positive_average, Triplet, TripletSet};

/// Numerically stable `log(1 + exp(z))`.
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Smooth hinge `m = softplus(z)`; `m ≥ max(0, z)` and `m > 0`.
pub fn smooth_m(z: f64) -> f64 {
    softplus(z)
}

/// Negative log-likelihood of one triplet: `−log σ(−f) = softplus(f)`.
pub fn triplet_nll(f: f64) -> f64 {
    softplus(f)
}

/// The metric parameters `(R, L)` with `LᵀL = I_l` and the angular bound α.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricParams {
    l: DMatrix<f64>,
    r: DMatrix<f64>,
    alpha_degrees: f64,
    tan2a: f64,
}

impl MetricParams {
    pub fn new(l: DMatrix<f64>, r: DMatrix<f64>, alpha_degrees: f64) -> Result<Self> {
        if l.shape() != r.shape() {
            return Err(Error::DimensionMismatch {
                expected: l.ncols(),
                got: r.ncols(),
            });
        }
        if l.ncols() >= l.nrows() {
            return Err(Error::InvalidConfig(format!(
                "embedding dimension l = {} must be < d = {}",
                l.ncols(),
                l.nrows()
            )));
        }
        if !(alpha_degrees > 0.0 && alpha_degrees < 90.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in (0, 90) degrees, got {alpha_degrees}"
            )));
        }
        let err = orthogonality_error(&l);
        if err > 1e-8 {
            return Err(Error::InvalidConfig(format!(
                "L is not orthonormal: ||L'L - I||_F = {err:e}"
            )));
        }
        let tan = alpha_degrees.to_radians().tan();
        Ok(Self {
            l,
            r,
            alpha_degrees,
            tan2a: 4.0 * tan * tan,
        })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn alpha_degrees(&self) -> f64 {
        self.alpha_degrees
    }

    /// The cached coefficient `4·tan²α`.
    pub fn tan2a(&self) -> f64 {
        self.tan2a
    }

    pub fn d(&self) -> usize {
        self.l.nrows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.l.ncols()
    }
}

/// `‖LᵀL − I‖_F`.
pub fn orthogonality_error(l: &DMatrix<f64>) -> f64 {
    let lt_l = l.transpose() * l;
    (lt_l - DMatrix::identity(l.ncols(), l.ncols())).norm()
}

/// Squared Mahalanobis-like distance `(x−y)ᵀLLᵀ(x−y) = ‖Lᵀ(x−y)‖²`.
pub fn mahalanobis_sq(l: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (l.transpose() * (x - y)).norm_squared()
}

/// Hinge value `z = δ²_L(a,p) − 4tan²α·δ²_L(n, avg)` for one triplet.
pub fn angular_hinge_z(l: &DMatrix<f64>, t: &Triplet, tan2a: f64, x: &FeatureMatrix) -> f64 {
    let a = x.row(t.a);
    let p = x.row(t.p);
    let n = x.row(t.n);
    let avg = anchor_positive_average(x, t);
    mahalanobis_sq(l, &a, &p) - tan2a * mahalanobis_sq(l, &n, &avg)
}

/// Triplet weights `(w⁺, w⁻, w)` from the bilinear similarities under `RRᵀ`.
pub fn weights(r: &DMatrix<f64>, t: &Triplet, x: &FeatureMatrix) -> (f64, f64, f64) {
    let a = x.row(t.a);
    let p = x.row(t.p);
    let n = x.row(t.n);
    let avg = anchor_positive_average(x, t);
    let rt = r.transpose();
    let w_plus = sigmoid((&rt * a).dot(&(&rt * p)));
    let w_minus = 1.0 - sigmoid((&rt * avg).dot(&(&rt * n)));
    (w_plus, w_minus, 0.5 * (w_plus + w_minus))
}

/// Per-triplet scalars of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletTerms {
    pub z: f64,
    pub m: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub w: f64,
    pub f: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossBreakdown {
    pub terms: Vec<TripletTerms>,
    pub total: f64,
}

/// Objective `Σ_i softplus(w_i·m_i)` with the full per-triplet breakdown.
/// Empty triplet sets evaluate to 0 so degenerate batches can be skipped.
pub fn objective(params: &MetricParams, set: &TripletSet, x: &FeatureMatrix) -> (f64, LossBreakdown) {
    let mut terms = Vec::with_capacity(set.len());
    let mut total = 0.0;
    for t in &set.triplets {
        let z = angular_hinge_z(&params.l, t, params.tan2a, x);
        let m = smooth_m(z);
        let (w_plus, w_minus, w) = weights(&params.r, t, x);
        let f = w * m;
        let p = sigmoid(-f);
        total += triplet_nll(f);
        terms.push(TripletTerms {
            z,
            m,
            w_plus,
            w_minus,
            w,
            f,
            p,
        });
    }
    (total, LossBreakdown { terms, total })
}

/// Exact Euclidean gradients of [`objective`] with respect to `R` and `L`.
///
/// Chain: `∂total/∂f = σ(f)`, `∂f/∂m = w`, `∂f/∂w = m`, `∂m/∂z = σ(z)`,
/// `∂δ²_L(u,v)/∂L = 2(u−v)(u−v)ᵀL`, and for each bilinear score
/// `s = uᵀRRᵀv`: `∂s/∂R = (uvᵀ + vuᵀ)R`.
pub fn euclid_grads(
    params: &MetricParams,
    set: &TripletSet,
    x: &FeatureMatrix,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (d, l_dim) = params.l.shape();
    let mut g_r = DMatrix::zeros(d, l_dim);
    let mut g_l = DMatrix::zeros(d, l_dim);
    let rt = params.r.transpose();

    for t in &set.triplets {
        let a = x.row(t.a);
        let p = x.row(t.p);
        let n = x.row(t.n);
        let avg = anchor_positive_average(x, t);

        let u_ap = &a - &p;
        let u_nm = &n - &avg;
        let z = (params.l.transpose() * &u_ap).norm_squared()
            - params.tan2a * (params.l.transpose() * &u_nm).norm_squared();
        let m = smooth_m(z);

        let s_plus = (&rt * &a).dot(&(&rt * &p));
        let s_minus = (&rt * &avg).dot(&(&rt * &n));
        let w_plus = sigmoid(s_plus);
        let w_minus = 1.0 - sigmoid(s_minus);
        let w = 0.5 * (w_plus + w_minus);
        let f = w * m;
        let sf = sigmoid(f);

        // dtotal/dL through z.
        let cz = sf * w * sigmoid(z);
        let lt_ap = params.l.transpose() * &u_ap;
        let lt_nm = params.l.transpose() * &u_nm;
        g_l += (&u_ap * lt_ap.transpose()) * (2.0 * cz);
        g_l += (&u_nm * lt_nm.transpose()) * (-2.0 * cz * params.tan2a);

        // dtotal/dR through w.
        let dwp = sigmoid(s_plus) * (1.0 - sigmoid(s_plus));
        let dwm = -sigmoid(s_minus) * (1.0 - sigmoid(s_minus));
        let cr = sf * m * 0.5;
        let rt_a = params.r.transpose() * &a;
        let rt_p = params.r.transpose() * &p;
        let rt_avg = params.r.transpose() * &avg;
        let rt_n = params.r.transpose() * &n;
        g_r += (&a * rt_p.transpose() + &p * rt_a.transpose()) * (cr * dwp);
        g_r += (&avg * rt_n.transpose() + &n * rt_avg.transpose()) * (cr * dwm);
    }
    (g_r, g_l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mining::TripletSet;
    use nalgebra::{dmatrix, dvector};
    use rand::Rng as _;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_orthonormal(d: usize, l: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(d, l, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let qr = m.qr();
        qr.q()
    }

    fn random_features(n: usize, d: usize, rng: &mut ChaCha8Rng) -> FeatureMatrix {
        FeatureMatrix::new(DMatrix::from_fn(n, d, |_, _| rng.gen::<f64>() * 2.0 - 1.0)).unwrap()
    }

    fn random_triplets(n: usize, count: usize, rng: &mut ChaCha8Rng) -> TripletSet {
        let mut triplets = Vec::new();
        while triplets.len() < count {
            let a = rng.gen_range(0..n);
            let p = rng.gen_range(0..n);
            let t = rng.gen_range(0..n);
            if a != p && t != a && t != p {
                triplets.push(Triplet { a, p, n: t });
            }
        }
        TripletSet { triplets }
    }

    #[test]
    fn mahalanobis_basics() {
        let l = DMatrix::identity(3, 3);
        let x = dvector![1.0, 2.0, 3.0];
        let y = dvector![0.0, 0.0, 1.0];
        assert_eq!(mahalanobis_sq(&l, &x, &x), 0.0);
        assert!((mahalanobis_sq(&l, &x, &y) - 9.0).abs() < 1e-14);
    }

    #[test]
    fn mahalanobis_matches_matrix_oracle() {
        // Hand-built orthonormal 3x2 L; compare against explicit LLᵀ form.
        let l = dmatrix![
            1.0 / 2.0f64.sqrt(), 0.0;
            1.0 / 2.0f64.sqrt(), 0.0;
            0.0, 1.0
        ];
        let diff = dvector![1.0, 1.0, 1.0];
        let oracle = (diff.transpose() * &l * l.transpose() * &diff)[(0, 0)];
        let got = mahalanobis_sq(&l, &dvector![2.0, 2.0, 2.0], &dvector![1.0, 1.0, 1.0]);
        assert!((got - oracle).abs() < 1e-14);
        assert!((got - 3.0).abs() < 1e-14); // ‖Lᵀ(1,1,1)‖² = 2 + 1
    }

    #[test]
    fn softplus_branches() {
        assert!((smooth_m(0.0) - 2.0f64.ln()).abs() < 1e-15);
        assert!((smooth_m(100.0) - 100.0).abs() < 1e-12);
        assert!(smooth_m(100.0).is_finite());
        assert!(smooth_m(-100.0) > 0.0);
        assert!((smooth_m(-2.0) - 0.126928011).abs() < 1e-8);
        for z in [-100.0, -31.0, -1.0, 0.0, 1.0, 31.0, 100.0] {
            assert!(smooth_m(z) >= z.max(0.0));
            assert!(smooth_m(z) > 0.0);
        }
    }

    #[test]
    fn nll_softplus_identity() {
        assert!((triplet_nll(0.0) - 2.0f64.ln()).abs() < 1e-15);
        assert!((triplet_nll(1.5) - 1.7014132779827524).abs() < 1e-12);
        let mut f = -50.0;
        while f <= 50.0 {
            let direct = -sigmoid(-f).ln();
            assert!((direct - triplet_nll(f)).abs() <= 1e-12, "f = {f}");
            f += 0.01;
        }
    }

    #[test]
    fn zero_r_gives_half_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_features(4, 3, &mut rng);
        let t = Triplet { a: 0, p: 1, n: 2 };
        let (wp, wm, w) = weights(&DMatrix::zeros(3, 2), &t, &x);
        assert_eq!((wp, wm, w), (0.5, 0.5, 0.5));
    }

    #[test]
    fn weights_match_arithmetic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_features(5, 3, &mut rng);
        let r = DMatrix::from_fn(3, 2, |_, _| rng.gen::<f64>() - 0.5);
        let t = Triplet { a: 0, p: 3, n: 4 };
        let (wp, wm, w) = weights(&r, &t, &x);
        let rrt = &r * r.transpose();
        let avg = (x.row(0) + x.row(3)) * 0.5;
        let s_plus = (x.row(0).transpose() * &rrt * x.row(3))[(0, 0)];
        let s_minus = (avg.transpose() * &rrt * x.row(4))[(0, 0)];
        assert!((wp - sigmoid(s_plus)).abs() < 1e-14);
        assert!((wm - (1.0 - sigmoid(s_minus))).abs() < 1e-14);
        assert!((w - 0.5 * (wp + wm)).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&wp));
        assert!((0.0..=1.0).contains(&wm));
    }

    #[test]
    fn hinge_z_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = random_orthonormal(3, 2, &mut rng);
        // anchor == positive → δ²(a,p) = 0 and z < 0 for any negative off avg.
        let x = random_features(4, 3, &mut rng);
        let mut data = x.data().clone();
        data.set_row(1, &data.row(0).clone_owned());
        let x = FeatureMatrix::new(data).unwrap();
        let t = Triplet { a: 0, p: 1, n: 2 };
        let z = angular_hinge_z(&l, &t, 4.0, &x);
        assert!(z < 0.0);
        // α = 45° → coefficient exactly 4.
        let params = MetricParams::new(l, DMatrix::zeros(3, 2), 45.0).unwrap();
        assert!((params.tan2a() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hinge_sign_matches_geometric_tangent_oracle() {
        // sign(z) = sign(tan²(n) − tan²(α)) with tan(n) = ½δ(a,p)/δ(n,avg)
        // constructed independently in the embedded space.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let alpha: f64 = 37.0;
        let tan2a = 4.0 * alpha.to_radians().tan().powi(2);
        for _ in 0..1000 {
            let l = random_orthonormal(3, 2, &mut rng);
            let x = random_features(3, 3, &mut rng);
            let t = Triplet { a: 0, p: 1, n: 2 };
            let z = angular_hinge_z(&l, &t, tan2a, &x);
            if z.abs() < 1e-9 {
                continue;
            }
            let avg = anchor_positive_average(&x, &t);
            let d_ap = mahalanobis_sq(&l, &x.row(0), &x.row(1)).sqrt();
            let d_nm = mahalanobis_sq(&l, &x.row(2), &avg).sqrt();
            let tan_n = 0.5 * d_ap / d_nm;
            let geo = tan_n.powi(2) - alpha.to_radians().tan().powi(2);
            assert_eq!(z > 0.0, geo > 0.0);
        }
    }

    #[test]
    fn objective_single_triplet_zero_r() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = random_orthonormal(3, 2, &mut rng);
        let x = random_features(3, 3, &mut rng);
        let set = TripletSet {
            triplets: vec![Triplet { a: 0, p: 1, n: 2 }],
        };
        let params = MetricParams::new(l.clone(), DMatrix::zeros(3, 2), 45.0).unwrap();
        let (total, bd) = objective(&params, &set, &x);
        let m1 = smooth_m(angular_hinge_z(&l, &set.triplets[0], params.tan2a(), &x));
        assert!((total - softplus(0.5 * m1)).abs() < 1e-14);
        assert_eq!(bd.terms.len(), 1);
       assert!(bd.terms[0].p > 0.0 && bd.terms[0].p <= 0.5);
    }

    #[test]
    fn objective_empty_set_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let l = random_orthonormal(4, 2, &mut rng);
        let x = random_features(3, 4, &mut rng);
        let params = MetricParams::new(l, DMatrix::zeros(4, 2), 45.0).unwrap();
        let (total, bd) = objective(&params, &TripletSet::default(), &x);
        assert_eq!(total, 0.0);
        assert!(bd.terms.is_empty());
    }

    #[test]
    fn right_action_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 6;
        let ld = 3;
        let x = random_features(10, d, &mut rng);
        let set = random_triplets(10, 8, &mut rng);
        let l = random_orthonormal(d, ld, &mut rng);
        let r = DMatrix::from_fn(d, ld, |_, _| rng.gen::<f64>() - 0.5);
        let params = MetricParams::new(l.clone(), r.clone(), 45.0).unwrap();
        let (base, _) = objective(&params, &set, &x);
        for _ in 0..10 {
            let b = random_orthonormal(ld, ld, &mut rng);
            let rotated = MetricParams::new(&l * &b, r.clone(), 45.0).unwrap();
            let (rot, _) = objective(&rotated, &set, &x);
            assert!((base - rot).abs() <= 1e-10 * (1.0 + base.abs()));
        }
    }

    #[test]
    fn objective_matches_independent_reimplementation() {
        // From-scratch reimplementation of the whole chain, kept free of
        // the production helpers.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = 6;
        let ld = 3;
        let x = random_features(9, d, &mut rng);
        let set = random_triplets(9, 5, &mut rng);
        let l = random_orthonormal(d, ld, &mut rng);
        let r = DMatrix::from_fn(d, ld, |_, _| rng.gen::<f64>() - 0.5);
        let alpha: f64 = 45.0;
        let params = MetricParams::new(l.clone(), r.clone(), alpha).unwrap();
        let (total, _) = objective(&params, &set, &x);

        let llt = &l * l.transpose();
        let rrt = &r * r.transpose();
        let tan2a = 4.0 * alpha.to_radians().tan().powi(2);
        let mut oracle = 0.0;
        for t in &set.triplets {
            let a = x.row(t.a);
            let p = x.row(t.p);
            let n = x.row(t.n);
            let avg = (&a + &p) * 0.5;
            let d2 = |u: &DVector<f64>, v: &DVector<f64>| {
                let diff = u - v;
                (diff.transpose() * &llt * &diff)[(0, 0)]
            };
            let z = d2(&a, &p) - tan2a * d2(&n, &avg);
            let m = (1.0 + z.exp()).ln();
            let wp = 1.0 / (1.0 + (-(a.transpose() * &rrt * &p)[(0, 0)]).exp());
            let wm = 1.0 - 1.0 / (1.0 + (-(avg.transpose() * &rrt * &n)[(0, 0)]).exp());
            let f = 0.5 * (wp + wm) * m;
            oracle += -(1.0 / (1.0 + f.exp())).ln();
        }
        assert!((total - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()));
    }

    #[test]
    fn weighted_bound_and_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 5;
        let ld = 2;
        let x = random_features(8, d, &mut rng);
        let set = random_triplets(8, 6, &mut rng);
        let l = random_orthonormal(d, ld, &mut rng);
        let r = DMatrix::from_fn(d, ld, |_, _| rng.gen::<f64>() - 0.5);
        let params = MetricParams::new(l, r, 45.0).unwrap();
        let (total, bd) = objective(&params, &set, &x);
        // Weighted ≤ unweighted per triplet and in total.
        let mut unweighted = 0.0;
        for term in &bd.terms {
            assert!(softplus(term.f) <= softplus(term.m) + 1e-15);
            unweighted += softplus(term.m);
        }
        assert!(total <= unweighted + 1e-12);
        // Permutation invariance of the sum.
        let mut reversed = set.clone();
        reversed.triplets.reverse();
        let (total_rev, _) = objective(&params, &reversed, &x);
        assert!((total - total_rev).abs() < 1e-12);
    }

    fn finite_diff_grads(
        params: &MetricParams,
        set: &TripletSet,
        x: &FeatureMatrix,
        step: f64,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let (d, ld) = params.l().shape();
        let mut g_r = DMatrix::zeros(d, ld);
        let mut g_l = DMatrix::zeros(d, ld);
        let eval = |l: DMatrix<f64>, r: DMatrix<f64>| -> f64 {
            // Raw evaluation without the orthonormality gate, since the
            // perturbed L leaves the manifold.
            let tan2a = params.tan2a();
            let mut total = 0.0;
            for t in &set.triplets {
                let z = angular_hinge_z(&l, t, tan2a, x);
                let (_, _, w) = weights(&r, t, x);
                total += triplet_nll(w * smooth_m(z));
            }
            total
        };
        for i in 0..d {
            for j in 0..ld {
                let mut lp = params.l().clone();
                let mut lm = params.l().clone();
                lp[(i, j)] += step;
                lm[(i, j)] -= step;
                g_l[(i, j)] = (eval(lp, params.r().clone()) - eval(lm, params.r().clone()))
                    / (2.0 * step);
                let mut rp = params.r().clone();
                let mut rm = params.r().clone();
                rp[(i, j)] += step;
                rm[(i, j)] -= step;
                g_r[(i, j)] = (eval(params.l().clone(), rp) - eval(params.l().clone(), rm))
                    / (2.0 * step);
            }
        }
        (g_r, g_l)
    }

    fn max_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let scale = a.norm().max(b.norm()).max(1e-12);
        (a - b).abs().max() / scale
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = 8;
        let ld = 4;
        let x = random_features(12, d, &mut rng);
        let set = random_triplets(12, 20, &mut rng);
        let l = random_orthonormal(d, ld, &mut rng);
        let r = DMatrix::from_fn(d, ld, |_, _| rng.gen::<f64>() - 0.5);
        let params = MetricParams::new(l, r, 45.0).unwrap();
        let (g_r, g_l) = euclid_grads(&params, &set, &x);
        let (fd_r, fd_l) = finite_diff_grads(&params, &set, &x, 1e-5);
        assert!(max_rel_err(&g_r, &fd_r) <= 1e-5);
        assert!(max_rel_err(&g_l, &fd_l) <= 1e-5);
    }

    #[test]
    fn gradients_duplicate_anchor_zero_r() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 4;
        let ld = 2;
        let mut data = DMatrix::from_fn(3, d, |_, _| rng.gen::<f64>() - 0.5);
        data.set_row(1, &data.row(0).clone_owned()); // a == p
        let x = FeatureMatrix::new(data).unwrap();
        let set = TripletSet {
            triplets: vec![Triplet { a: 0, p: 1, n: 2 }],
        };
        let l = random_orthonormal(d, ld, &mut rng);
        let params = MetricParams::new(l, DMatrix::zeros(d, ld), 45.0).unwrap();
        let (g_r, g_l) = euclid_grads(&params, &set, &x);
        let (fd_r, fd_l) = finite_diff_grads(&params, &set, &x, 1e-5);
        assert!(max_rel_err(&g_r, &fd_r) <= 1e-5);
        assert!(max_rel_err(&g_l, &fd_l) <= 1e-5);
    }
}
