//! Thresholded masks, the per-sample false-negative loss, and the critical
//! threshold at which that loss first drops to a tolerance.
//!
//! The threshold parameter `t` lowers the confidence cut: a voxel with
//! confidence `v` is predicted lesion iff `v >= 1 - t`. The comparison is
//! evaluated as `1 - v <= t`; for confidences of storage precision `1 - v`
//! is exact in `f64`, so this is the exact real-number comparison and a
//! critical threshold `t = 1 - v` always admits the voxel that produced it.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::volume::{ConfidenceVolume, LabelVolume, SamplePair};

/// Default bracket width for the bisection search.
pub const DEFAULT_BISECT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdParam(f64);

impl ThresholdParam {
    pub const ALL: ThresholdParam = ThresholdParam(1.0);
    pub const NONE: ThresholdParam = ThresholdParam(0.0);

    pub fn new(t: f64) -> Result<Self> {
        check_unit("t", t)?;
        Ok(Self(t))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// The confidence cut `1 - t`.
    pub fn cut(self) -> f64 {
        1.0 - self.0
    }

    #[inline]
    pub fn admits(self, confidence: f64) -> bool {
        admits(confidence, self.0)
    }
}

#[inline]
fn admits(confidence: f64, t: f64) -> bool {
    1.0 - confidence <= t
}

/// Score of a voxel: the smallest `t` at which it is predicted lesion.
#[inline]
pub fn voxel_score(confidence: f64) -> f64 {
    1.0 - confidence
}

pub fn predict_mask(conf: &ConfidenceVolume, thr: ThresholdParam) -> LabelVolume {
    LabelVolume::from_flags(conf.dims(), conf.iter().map(|v| thr.admits(v)))
        .expect("dims carried over from a valid volume")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnrLossValue {
    pub loss: f64,
    pub covered_lesion_voxels: usize,
    pub total_lesion_voxels: usize,
}

/// `1 - covered / total`. Every loss in the crate goes through this so that
/// feasibility checks and critical thresholds agree to the last bit.
#[inline]
pub fn loss_from_counts(covered: usize, total: usize) -> f64 {
    debug_assert!(total > 0 && covered <= total);
    1.0 - covered as f64 / total as f64
}

pub fn fnr_loss(sample: &SamplePair, thr: ThresholdParam) -> Result<FnrLossValue> {
    let conf = sample.confidence.values();
    let (covered, total) = sample
        .label
        .values()
        .iter()
        .zip(conf)
        .filter(|(&l, _)| l == 1)
        .fold((0usize, 0usize), |(c, n), (_, &v)| {
            (c + usize::from(thr.admits(f64::from(v))), n + 1)
        });
    if total == 0 {
        return Err(Error::EmptyGroundTruth(sample.id.clone()));
    }
    Ok(FnrLossValue {
        loss: loss_from_counts(covered, total),
        covered_lesion_voxels: covered,
        total_lesion_voxels: total,
    })
}

/// Fewest covered lesion voxels (out of `total`) that keep the loss within
/// `epsilon`, i.e. `ceil((1 - epsilon) * total)` evaluated against the exact
/// loss expression so float rounding of the product cannot shift it.
pub fn min_covered(total: usize, epsilon: f64) -> usize {
    let mut k = guarded_ceil((1.0 - epsilon) * total as f64).clamp(0.0, total as f64) as usize;
    while k > 0 && loss_from_counts(k - 1, total) <= epsilon {
        k -= 1;
    }
    while k < total && loss_from_counts(k, total) > epsilon {
        k += 1;
    }
    k
}

/// Ceiling that snaps values within a few ulps of an integer onto it, so that
/// products such as `0.8 * 5` that should be integral never round up a step.
pub fn guarded_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMethod {
    Exact,
    Bisection,
}

/// Per-sample nonconformity score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalScore {
    pub sample_id: String,
    pub t_i: f64,
    pub epsilon: f64,
    pub method: ScoreMethod,
}

fn lesion_scores(sample: &SamplePair) -> Vec<f64> {
    sample
        .label
        .values()
        .iter()
        .zip(sample.confidence.values())
        .filter(|(&l, _)| l == 1)
        .map(|(_, &v)| voxel_score(f64::from(v)))
        .collect()
}

/// Smallest `t` with loss ≤ `epsilon`, by order statistic: with `m` lesion
/// voxels and `k = ceil((1-ε)m)`, it is `1 - c_(k)` for the k-th largest
/// lesion confidence `c_(k)` (or 0 when `k = 0`).
pub fn critical_threshold_exact(sample: &SamplePair, epsilon: f64) -> Result<CriticalScore> {
    check_unit("epsilon", epsilon)?;
    let mut scores = lesion_scores(sample);
    if scores.is_empty() {
        return Err(Error::EmptyGroundTruth(sample.id.clone()));
    }
    let k = min_covered(scores.len(), epsilon);
    let t_i = if k == 0 {
        0.0
    } else {
        *scores.select_nth_unstable_by(k - 1, f64::total_cmp).1
    };
    Ok(CriticalScore {
        sample_id: sample.id.clone(),
        t_i,
        epsilon,
        method: ScoreMethod::Exact,
    })
}

/// Bracketing search for the critical threshold, kept as an independent
/// check on [`critical_threshold_exact`].
///
/// The bracket `[lo, hi]` starts at `[0, 1]`; a midpoint whose loss exceeds
/// `epsilon` raises `lo`, otherwise it lowers `hi`. The loop stops once the
/// bracket is no wider than `delta` and returns `hi`, which is always
/// feasible.
pub fn critical_threshold_bisect(
    sample: &SamplePair,
    epsilon: f64,
    delta: f64,
) -> Result<CriticalScore> {
    check_unit("epsilon", epsilon)?;
    if !(delta > 0.0) {
        return Err(Error::NonPositiveTolerance(delta));
    }
    let scores = lesion_scores(sample);
    if scores.is_empty() {
        return Err(Error::EmptyGroundTruth(sample.id.clone()));
    }
    let m = scores.len();
    let loss_at = |t: f64| loss_from_counts(scores.iter().filter(|&&s| s <= t).count(), m);

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > delta {
        let mid = 0.5 * (lo + hi);
        if loss_at(mid) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalScore {
        sample_id: sample.id.clone(),
        t_i: hi,
        epsilon,
        method: ScoreMethod::Bisection,
    })
}

/// Sorted view of one sample for repeated threshold queries.
///
/// Answers loss, predicted-voxel count and critical threshold in
/// `O(log n)` instead of rescanning the volume, which is what makes
/// thousands of random splits cheap.
#[derive(Debug, Clone)]
pub struct SampleProfile {
    pub id: String,
    /// Lesion voxel scores `1 - v`, ascending.
    lesion_scores: Vec<f64>,
    /// All voxel confidences, descending.
    confidences_desc: Vec<f32>,
}

impl SampleProfile {
    pub fn new(sample: &SamplePair) -> Self {
        let mut lesion_scores = lesion_scores(sample);
        lesion_scores.sort_unstable_by(f64::total_cmp);
        let mut confidences_desc = sample.confidence.values().to_vec();
        confidences_desc.sort_unstable_by(|a, b| b.total_cmp(a));
        Self {
            id: sample.id.clone(),
            lesion_scores,
            confidences_desc,
        }
    }

    pub fn lesion_count(&self) -> usize {
        self.lesion_scores.len()
    }

    pub fn voxel_count(&self) -> usize {
        self.confidences_desc.len()
    }

    pub fn covered(&self, t: f64) -> usize {
        self.lesion_scores.partition_point(|&s| s <= t)
    }

    pub fn predicted(&self, t: f64) -> usize {
        self.confidences_desc
            .partition_point(|&v| admits(f64::from(v), t))
    }

    /// `None` for a sample without lesion voxels.
    pub fn loss(&self, t: f64) -> Option<f64> {
        let m = self.lesion_count();
        (m > 0).then(|| loss_from_counts(self.covered(t), m))
    }

    pub fn critical(&self, epsilon: f64) -> Option<f64> {
        let m = self.lesion_count();
        (m > 0).then(|| match min_covered(m, epsilon) {
            0 => 0.0,
            k => self.lesion_scores[k - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfidenceHistogram {
    pub bins: usize,
    pub lesion: Vec<u64>,
    pub background: Vec<u64>,
}

impl ConfidenceHistogram {
    pub fn bin_edges(&self) -> Vec<(f64, f64)> {
        let width = 1.0 / self.bins as f64;
        (0..self.bins)
            .map(|i| (i as f64 * width, (i + 1) as f64 * width))
            .collect()
    }
}

/// Equal-width histograms over `[0, 1]` of lesion and background
/// confidences. A confidence of exactly 1 lands in the last bin.
pub fn lesion_confidence_histogram(sample: &SamplePair, bins: usize) -> Result<ConfidenceHistogram> {
    if bins == 0 {
        return Err(Error::OutOfRange {
            name: "bins",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    let mut lesion = vec![0u64; bins];
    let mut background = vec![0u64; bins];
    for (&l, v) in sample.label.values().iter().zip(sample.confidence.iter()) {
        let bin = ((v * bins as f64) as usize).min(bins - 1);
        if l == 1 {
            lesion[bin] += 1;
        } else {
            background[bin] += 1;
        }
    }
    Ok(ConfidenceHistogram {
        bins,
        lesion,
        background,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::GridDims;

    fn pair(conf: &[f32], mask: &[u8]) -> SamplePair {
        let dims = GridDims::new(1, 1, conf.len()).unwrap();
        SamplePair::new(
            "s",
            ConfidenceVolume::new(dims, conf.to_vec()).unwrap(),
            LabelVolume::new(dims, mask.to_vec()).unwrap(),
        )
        .unwrap()
    }

    fn four_lesions() -> SamplePair {
        pair(&[0.9, 0.6, 0.4, 0.2, 0.95], &[1, 1, 1, 1, 0])
    }

    fn t(x: f64) -> ThresholdParam {
        ThresholdParam::new(x).unwrap()
    }

    #[test]
    fn threshold_param_range() {
        assert!(ThresholdParam::new(-0.1).is_err());
        assert!(ThresholdParam::new(1.1).is_err());
        assert!(ThresholdParam::new(f64::NAN).is_err());
        assert_eq!(t(0.25).cut(), 0.75);
    }

    #[test]
    fn mask_examples() {
        let p = pair(&[0.9, 0.4], &[0, 0]);
        assert_eq!(predict_mask(&p.confidence, t(0.5)).values(), &[1, 0]);
        assert_eq!(predict_mask(&p.confidence, t(1.0)).values(), &[1, 1]);
        let p = pair(&[0.0, 1.0], &[0, 0]);
        assert_eq!(predict_mask(&p.confidence, t(1.0)).values(), &[1, 1]);
        let p = pair(&[1.0, 0.99], &[0, 0]);
        assert_eq!(predict_mask(&p.confidence, t(0.0)).values(), &[1, 0]);
    }

    #[test]
    fn loss_examples() {
        let s = four_lesions();
        let half = fnr_loss(&s, t(0.5)).unwrap();
        assert_eq!(
            (half.covered_lesion_voxels, half.total_lesion_voxels, half.loss),
            (2, 4, 0.5)
        );
        assert_eq!(fnr_loss(&s, t(1.0)).unwrap().loss, 0.0);
        assert_eq!(fnr_loss(&s, t(0.0)).unwrap().loss, 1.0);
    }

    #[test]
    fn loss_rejects_empty_ground_truth() {
        let s = pair(&[0.5, 0.5], &[0, 0]);
        assert!(matches!(fnr_loss(&s, t(0.5)), Err(Error::EmptyGroundTruth(_))));
        assert!(critical_threshold_exact(&s, 0.1).is_err());
        assert!(critical_threshold_bisect(&s, 0.1, 1e-4).is_err());
    }

    #[test]
    fn exact_examples() {
        let s = four_lesions();
        let c = critical_threshold_exact(&s, 0.25).unwrap();
        assert_eq!(c.t_i, 1.0 - f64::from(0.4f32));
        assert!((c.t_i - 0.6).abs() < 1e-7);
        assert_eq!(c.method, ScoreMethod::Exact);
        let c = critical_threshold_exact(&s, 0.0).unwrap();
        assert_eq!(c.t_i, 1.0 - f64::from(0.2f32));
        assert_eq!(critical_threshold_exact(&s, 1.0).unwrap().t_i, 0.0);
        assert!(critical_threshold_exact(&s, 1.5).is_err());
    }

    #[test]
    fn bisect_examples() {
        let s = four_lesions();
        let delta = 1e-4;
        let b = critical_threshold_bisect(&s, 0.25, delta).unwrap();
        assert!((b.t_i - 0.6).abs() <= 2.0 * delta);
        assert!(fnr_loss(&s, t(b.t_i)).unwrap().loss <= 0.25);
        let b = critical_threshold_bisect(&s, 1.0, delta).unwrap();
        assert!(b.t_i <= 2.0 * delta);
        let err = critical_threshold_bisect(&s, 0.25, 0.0).unwrap_err();
        assert_eq!(err.to_string(), "non-positive tolerance 0");
    }

    #[test]
    fn min_covered_matches_rational_ceiling() {
        // ceil((1 - eps) * m) with eps = p/q computed in integers.
        for m in 1..=60usize {
            for q in [2usize, 4, 5, 10, 20, 100] {
                for p in 0..=q {
                    let eps = p as f64 / q as f64;
                    let exact = (m * (q - p)).div_ceil(q);
                    let k = min_covered(m, eps);
                    assert!(loss_from_counts(k, m) <= eps);
                    assert!(k == 0 || loss_from_counts(k - 1, m) > eps);
                    // Float epsilon may sit a hair off p/q; the two can
                    // differ only where p*m/q is integral.
                    if (m * p) % q != 0 {
                        assert_eq!(k, exact, "m={m} eps={eps}");
                    } else {
                        assert!(k.abs_diff(exact) <= 1, "m={m} eps={eps}");
                    }
                }
            }
        }
        assert_eq!(min_covered(5, 0.2), 4);
        assert_eq!(min_covered(10, 0.1), 9);
    }

    #[test]
    fn guarded_ceil_snaps_near_integers() {
        assert_eq!(guarded_ceil((1.0 - 0.2) * 5.0), 4.0);
        assert_eq!(guarded_ceil(0.9 * 201.0), 181.0);
        assert_eq!(guarded_ceil(4.0 + 1e-15), 4.0);
        assert_eq!(guarded_ceil(4.0 + 1e-9), 5.0);
        assert_eq!(guarded_ceil(0.0), 0.0);
    }

    #[test]
    fn profile_agrees_with_direct_scan() {
        let s = four_lesions();
        let p = SampleProfile::new(&s);
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert_eq!(p.loss(x).unwrap(), fnr_loss(&s, t(x)).unwrap().loss);
            assert_eq!(
                p.predicted(x),
                predict_mask(&s.confidence, t(x)).positive_count()
            );
        }
        for eps in [0.0, 0.1, 0.25, 0.5, 0.75, 1.0] {
            assert_eq!(
                p.critical(eps).unwrap(),
                critical_threshold_exact(&s, eps).unwrap().t_i
            );
        }
    }

    #[test]
    fn histogram_examples() {
        let s = pair(&[0.25, 0.75], &[1, 0]);
        let h = lesion_confidence_histogram(&s, 2).unwrap();
        assert_eq!((h.lesion, h.background), (vec![1, 0], vec![0, 1]));

        let s = pair(&[1.0, 1.0, 1.0], &[1, 1, 1]);
        let h = lesion_confidence_histogram(&s, 4).unwrap();
        assert_eq!(h.lesion, vec![0, 0, 0, 3]);
        assert!(lesion_confidence_histogram(&s, 0).is_err());
    }
}
