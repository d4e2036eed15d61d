//! Test fixtures and independent oracles.
#![allow(dead_code)]

use std::collections::HashSet;

use rand::Rng;
use segconf::{ConfidenceVolume, GridDims, LabelVolume, SamplePair};

/// Random small volume with at least one lesion voxel. Confidences are
/// multiples of 2^-24, distinct when `tie_free` is set.
pub fn random_sample<R: Rng>(rng: &mut R, id: &str, tie_free: bool) -> SamplePair {
    let dims = GridDims::new(
        rng.random_range(1..=4),
        rng.random_range(1..=5),
        rng.random_range(2..=6),
    )
    .unwrap();
    let n = dims.len();
    let mut seen = HashSet::new();
    let conf: Vec<f32> = (0..n)
        .map(|_| loop {
            let k: u32 = rng.random_range(0..=1 << 24);
            if !tie_free || seen.insert(k) {
                break k as f32 / (1u32 << 24) as f32;
            }
        })
        .collect();
    let p = rng.random_range(0.2..0.9);
    let mut mask: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(p))).collect();
    if !mask.contains(&1) {
        let i = rng.random_range(0..n);
        mask[i] = 1;
    }
    SamplePair::new(
        id,
        ConfidenceVolume::new(dims, conf).unwrap(),
        LabelVolume::new(dims, mask).unwrap(),
    )
    .unwrap()
}

/// Loss evaluated straight from the mask definition `v >= 1 - t`, with no
/// shared code path.
pub fn naive_loss(s: &SamplePair, t: f64) -> f64 {
    let mut covered = 0usize;
    let mut total = 0usize;
    for (i, &l) in s.label.values().iter().enumerate() {
        if l == 1 {
            total += 1;
            if f64::from(s.confidence.values()[i]) >= 1.0 - t {
                covered += 1;
            }
        }
    }
    1.0 - covered as f64 / total as f64
}

/// Smallest feasible `t`: coarse scan at 1e-3, fine scan at 1e-6 inside the
/// bracketing coarse cell, then bisection on the final 1e-6 cell down to
/// 1e-12. Relies only on the loss being monotone.
pub fn brute_force_critical(s: &SamplePair, epsilon: f64) -> f64 {
    let feasible = |t: f64| naive_loss(s, t) <= epsilon;
    if feasible(0.0) {
        return 0.0;
    }
    let coarse = (1..=1000)
        .map(|j| j as f64 * 1e-3)
        .find(|&t| feasible(t))
        .unwrap_or(1.0);
    let fine = (0..=1000)
        .map(|j| coarse - 1e-3 + j as f64 * 1e-6)
        .find(|&t| feasible(t))
        .unwrap_or(coarse);
    let (mut lo, mut hi) = (fine - 1e-6, fine);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// The conformal threshold by its definition: the smallest candidate `t`
/// among the scores with at least `k*` scores at or below it.
pub fn definitional_quantile(scores: &[f64], alpha: f64) -> Option<f64> {
    let n = scores.len();
    // k* = ceil((1-alpha)(n+1)) with exact rational alpha handled by caller
    let k_star = ((1.0 - alpha) * (n as f64 + 1.0) - 1e-9).ceil() as usize;
    let mut candidates = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates
        .into_iter()
        .find(|&t| scores.iter().filter(|&&s| s <= t).count() >= k_star)
}

/// Pooled binomial standard error.
pub fn binomial_se(p: f64, count: usize) -> f64 {
    (p * (1.0 - p) / count as f64).sqrt()
}
