//! Clustering and retrieval metrics, plus a k-means baseline.
//!
//! Noise-labeled predictions are assigned unique fresh labels before any
//! metric is computed, so filtered examples penalize recall rather than
//! precision.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aas::NOISE;
use crate::error::{Error, Result};

/// Metric values in [0,1] (Recall@K as a percentage in [0,100]).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub nmi: f64,
    pub f_measure: f64,
    pub precision: f64,
    pub recall: f64,
    pub recall_at_k: BTreeMap<usize, f64>,
}

impl EvalReport {
    /// "key value" lines, one per metric.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("nmi {:.6}\n", self.nmi));
        out.push_str(&format!("f_measure {:.6}\n", self.f_measure));
        out.push_str(&format!("precision {:.6}\n", self.precision));
        out.push_str(&format!("recall {:.6}\n", self.recall));
        for (k, v) in &self.recall_at_k {
            out.push_str(&format!("recall_at_{k} {v:.6}\n"));
        }
        out
    }
}

/// Replaces each NOISE prediction by a unique fresh label.
fn resolve_noise(pred: &[i32]) -> Vec<i64> {
    let mut fresh = pred.iter().map(|&l| l as i64).max().unwrap_or(0) + 1;
    pred.iter()
        .map(|&l| {
            if l == NOISE {
                fresh += 1;
                fresh - 1
            } else {
                l as i64
            }
        })
        .collect()
}

fn counts(labels: &[i64]) -> BTreeMap<i64, usize> {
    let mut c = BTreeMap::new();
    for &l in labels {
        *c.entry(l).or_insert(0) += 1;
    }
    c
}

fn entropy(counts: &BTreeMap<i64, usize>, n: usize) -> f64 {
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(pred; truth) / ((H(pred)+H(truth))/2)`
/// with natural logs. Two identical single-cluster partitions score 1;
/// any other zero-entropy argument scores 0.
pub fn nmi(pred: &[i32], truth: &[i32]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let n = pred.len();
    if n == 0 {
        return Err(Error::EmptyDataset(0));
    }
    let pred = resolve_noise(pred);
    let truth: Vec<i64> = truth.iter().map(|&l| l as i64).collect();
    let cp = counts(&pred);
    let ct = counts(&truth);
    let hp = entropy(&cp, n);
    let ht = entropy(&ct, n);
    if hp == 0.0 && ht == 0.0 {
        // Both single-cluster: identical partitions by definition.
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut joint: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for (&a, &b) in pred.iter().zip(truth.iter()) {
        *joint.entry((a, b)).or_insert(0) += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for (&(a, b), &c) in &joint {
        let pab = c as f64 / nf;
        let pa = cp[&a] as f64 / nf;
        let pb = ct[&b] as f64 / nf;
        mi += pab * (pab / (pa * pb)).ln();
    }
    Ok(mi / (0.5 * (hp + ht)))
}

/// Pairwise precision/recall/F over all unordered example pairs.
pub fn pairwise_prf(pred: &[i32], truth: &[i32]) -> Result<(f64, f64, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let pred = resolve_noise(pred);
    let n = pred.len();
    let (mut tp, mut fp, mut fne) = (0u64, 0u64, 0u64);
    for i in 0..n {
        for j in (i + 1)..n {
            let same_pred = pred[i] == pred[j];
            let same_truth = truth[i] == truth[j];
            match (same_pred, same_truth) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fne += 1,
                (false, false) => {}
            }
        }
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fne > 0 {
        tp as f64 / (tp + fne) as f64
    } else {
        0.0
    };
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((precision, recall, f))
}

/// Recall@K over Euclidean neighbors in the embedding rows of `e`
/// (self excluded, ties by index), as percentages. K ≥ n is clipped to
/// n−1 with a warning.
pub fn recall_at_k(
    e: &DMatrix<f64>,
    truth: &[i32],
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    let n = e.nrows();
    if truth.len() != n {
        return Err(Error::LengthMismatch(n, truth.len()));
    }
    if n < 2 {
        return Err(Error::EmptyDataset(n));
    }
    let mut clipped: Vec<usize> = ks
        .iter()
        .map(|&k| {
            if k >= n {
                log::warn!("K = {k} >= n = {n}; clipping to {}", n - 1);
                n - 1
            } else {
                k
            }
        })
        .collect();
    clipped.sort_unstable();
    clipped.dedup();
    let k_max = *clipped.last().expect("at least one K");

    let mut hits: BTreeMap<usize, usize> = clipped.iter().map(|&k| (k, 0)).collect();
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for q in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != q));
        order.sort_by(|&a, &b| {
            (e.row(q) - e.row(a))
                .norm_squared()
                .partial_cmp(&(e.row(q) - e.row(b)).norm_squared())
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut seen_same = usize::MAX; // first rank with a same-class hit
        for (rank, &j) in order[..k_max].iter().enumerate() {
            if truth[j] == truth[q] {
                seen_same = rank;
                break;
            }
        }
        for (&k, hit) in hits.iter_mut() {
            if seen_same < k {
                *hit += 1;
            }
        }
    }
    Ok(hits
        .into_iter()
        .map(|(k, h)| (k, 100.0 * h as f64 / n as f64))
        .collect())
}

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded
/// from the point farthest from its assigned center.
pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64, max_iters: usize) -> Result<Vec<i32>> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::BadKMeansK { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d2 = |i: usize, c: &nalgebra::RowDVector<f64>| (x.row(i) - c).norm_squared();

    // k-means++ seeding.
    let mut centers: Vec<nalgebra::RowDVector<f64>> = Vec::with_capacity(k);
    centers.push(x.row(rng.gen_range(0..n)).clone_owned().into());
    let mut min_d2: Vec<f64> = (0..n).map(|i| d2(i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = min_d2.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centers.push(x.row(next).clone_owned().into());
        for i in 0..n {
            min_d2[i] = min_d2[i].min(d2(i, centers.last().unwrap()));
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..max_iters {
        // Assignment step.
        let mut changed = false;
        for i in 0..n {
            let best = (0..k)
                .min_by(|&a, &b| d2(i, &centers[a]).partial_cmp(&d2(i, &centers[b])).unwrap())
                .unwrap();
            if best != assign[i] {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        // Update step.
        let mut sums = vec![nalgebra::RowDVector::zeros(x.ncols()); k];
        let mut cnt = vec![0usize; k];
        for i in 0..n {
            sums[assign[i]] += x.row(i);
            cnt[assign[i]] += 1;
        }
        for c in 0..k {
            if cnt[c] > 0 {
                centers[c] = &sums[c] / cnt[c] as f64;
            } else {
                // Re-seed from the point farthest from its center.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        d2(a, &centers[assign[a]])
                            .partial_cmp(&d2(b, &centers[assign[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centers[c] = x.row(far).clone_owned().into();
            }
        }
    }
    Ok(assign.into_iter().map(|a| a as i32).collect())
}
