//! Semi-hard triplet mining over pseudo-labels.
//!
//! For each anchor-positive pair the negative is the nearest one (under
//! the current metric) that still lies farther from the anchor than the
//! positive; when no such negative exists the hardest negative (overall
//! nearest) is used instead so early training never starves.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::aas::NOISE;
use crate::features::FeatureMatrix;

/// Index triple into a [`FeatureMatrix`]. The anchor and positive share a
/// non-noise pseudo-label; the negative carries a different non-noise label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub a: usize,
    pub p: usize,
    pub n: usize,
}

/// A list of triplets. Empty is legal and signals a batch to skip.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Midpoint `(x_a + x_p)/2` of the anchor-positive pair.
pub fn anchor_positive_average(x: &FeatureMatrix, t: &Triplet) -> DVector<f64> {
    (x.row(t.a) + x.row(t.p)) * 0.5
}

/// Mines semi-hard triplets over the whole dataset.
pub fn mine_semihard(
    x: &FeatureMatrix,
    labels: &[i32],
    l: &DMatrix<f64>,
    per_anchor: usize,
    rng: &mut impl Rng,
) -> TripletSet {
    let all: Vec<usize> = (0..x.n()).collect();
    mine_semihard_within(x, labels, &all, l, per_anchor, rng)
}

/// Mines semi-hard triplets restricted to `subset` (a mini-batch).
///
/// Anchors are visited in subset order; positives are sampled uniformly
/// without replacement (at most `per_anchor` per anchor). Noise-labeled
/// examples never appear in any role. Fewer than two non-noise labels in
/// the subset yields an empty set with a warning.
pub fn mine_semihard_within(
    x: &FeatureMatrix,
    labels: &[i32],
    subset: &[usize],
    l: &DMatrix<f64>,
    per_anchor: usize,
    rng: &mut impl Rng,
) -> TripletSet {
    assert_eq!(labels.len(), x.n(), "one label per example");
    let mut distinct: Vec<i32> = subset
        .iter()
        .map(|&i| labels[i])
        .filter(|&lb| lb != NOISE)
        .collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        log::warn!(
            "semi-hard mining skipped: {} non-noise cluster(s) in the batch",
            distinct.len()
        );
        return TripletSet::default();
    }

    // Embed the subset once under the current metric.
    let emb: Vec<DVector<f64>> = subset.iter().map(|&i| l.transpose() * x.row(i)).collect();
    let d2 = |a: usize, b: usize| (&emb[a] - &emb[b]).norm_squared();

    let mut triplets = Vec::new();
    let mut positives: Vec<usize> = Vec::new();
    for (ai, &a) in subset.iter().enumerate() {
        if labels[a] == NOISE {
            continue;
        }
        positives.clear();
        positives.extend(
            (0..subset.len()).filter(|&pi| pi != ai && labels[subset[pi]] == labels[a]),
        );
        if positives.is_empty() {
            continue;
        }
        positives.shuffle(rng);
        for &pi in positives.iter().take(per_anchor) {
            let d_ap = d2(ai, pi);
            // Semi-hard: nearest negative beyond the positive; otherwise
            // the hardest (overall nearest) negative. Ties by index.
            let mut semi: Option<(usize, f64)> = None;
            let mut hardest: Option<(usize, f64)> = None;
            for ni in 0..subset.len() {
                let lb = labels[subset[ni]];
                if lb == NOISE || lb == labels[a] {
                    continue;
                }
                let d_an = d2(ai, ni);
                if hardest.map_or(true, |(_, d)| d_an < d) {
                    hardest = Some((ni, d_an));
                }
                if d_an > d_ap && semi.map_or(true, |(_, d)| d_an < d) {
                    semi = Some((ni, d_an));
                }
            }
            if let Some((ni, _)) = semi.or(hardest) {
                triplets.push(Triplet {
                    a,
                    p: subset[pi],
                    n: subset[ni],
                });
            }
        }
    }
    TripletSet { triplets }
}
