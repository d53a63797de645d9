//! Synthetic 2-D benchmark: three crescents, three Gaussians, and
//! uniform background noise.
//!
//! Generator constants (ring layout, annulus width, Gaussian spread) are
//! artifact choices picked so the density-following clustering separates
//! the classes while a center-based baseline cannot.

use nalgebra::DMatrix;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const POINTS_PER_CLASS: usize = 150;
pub const N_CRESCENTS: usize = 3;
pub const N_GAUSSIANS: usize = 3;
pub const N_NOISE: usize = 300;
pub const TOTAL: usize = POINTS_PER_CLASS * (N_CRESCENTS + N_GAUSSIANS) + N_NOISE;

const RING_RADIUS: f64 = 1.6;
const CRESCENT_RADIUS: f64 = 2.2;
const CRESCENT_WIDTH: f64 = 0.2;
const GAUSSIAN_SIGMA: f64 = 0.1;

/// Generates the labeled synthetic set: rows 2-D, labels 0..5 for the six
/// classes and −1 for the 300 uniform noise points. Crescents are
/// outward-opening half annuli centered on a ring at 0°/120°/240°; each
/// Gaussian sits at its crescent's ring slot, on the arc's chord, so a
/// crescent half-wraps its Gaussian. A center-based clustering cannot
/// carve that pair with convex cells, while the arc-to-blob gap stays
/// wide enough for the graph clustering to keep them apart.
pub fn gen_synthetic(seed: u64) -> (DMatrix<f64>, Vec<i32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<[f64; 2]> = Vec::with_capacity(TOTAL);
    let mut labels: Vec<i32> = Vec::with_capacity(TOTAL);

    let center = |angle_deg: f64| {
        let a = angle_deg.to_radians();
        [RING_RADIUS * a.cos(), RING_RADIUS * a.sin()]
    };

    // Crescents: half annuli of radius 1 ± 0.1, opening outward.
    for k in 0..N_CRESCENTS {
        let rot = (k as f64) * 120.0;
        let c = center(rot);
        for _ in 0..POINTS_PER_CLASS {
            let radius = CRESCENT_RADIUS - CRESCENT_WIDTH / 2.0
                + rng.gen::<f64>() * CRESCENT_WIDTH;
            let theta = (rot - 90.0 + rng.gen::<f64>() * 180.0).to_radians();
            rows.push([c[0] + radius * theta.cos(), c[1] + radius * theta.sin()]);
            labels.push(k as i32);
        }
    }

    // Gaussians at the crescent ring slots, centered on each arc's chord.
    for k in 0..N_GAUSSIANS {
        let c = center((k as f64) * 120.0);
        for _ in 0..POINTS_PER_CLASS {
            rows.push([
                c[0] + GAUSSIAN_SIGMA * standard_normal(&mut rng),
                c[1] + GAUSSIAN_SIGMA * standard_normal(&mut rng),
            ]);
            labels.push((N_CRESCENTS + k) as i32);
        }
    }

    // Uniform noise over the bounding box of the class points.
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &rows {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    for _ in 0..N_NOISE {
        rows.push([
            lo[0] + rng.gen::<f64>() * (hi[0] - lo[0]),
            lo[1] + rng.gen::<f64>() * (hi[1] - lo[1]),
        ]);
        labels.push(-1);
    }

    let data = DMatrix::from_fn(TOTAL, 2, |i, j| rows[i][j]);
    (data, labels)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
