//! Test-split evaluation: per-sample loss and compactness at a threshold,
//! empirical compliance rate (ECR), and their means and spreads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::CalibrationResult;
use crate::error::{check_unit, Error, Result};
use crate::fnr::{loss_from_counts, SampleProfile, ThresholdParam};
use crate::volume::SamplePair;

/// Default fixed threshold parameter of the uncalibrated baseline (cut 0.5).
pub const DEFAULT_BASELINE_T: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub loss: f64,
    /// Predicted voxels over all voxels.
    pub pc: f64,
    /// Predicted voxels over ground-truth voxels; absent for empty masks.
    pub pc_gt: Option<f64>,
    pub compliant: bool,
    /// Empty ground truth, scored with loss 0.
    pub vacuous: bool,
}

impl SampleMetrics {
    fn from_counts(
        id: &str,
        covered: usize,
        lesion: usize,
        predicted: usize,
        voxels: usize,
        epsilon: f64,
    ) -> Self {
        let vacuous = lesion == 0;
        let loss = if vacuous {
            0.0
        } else {
            loss_from_counts(covered, lesion)
        };
        Self {
            id: id.to_string(),
            loss,
            pc: predicted as f64 / voxels as f64,
            pc_gt: (!vacuous).then(|| predicted as f64 / lesion as f64),
            compliant: loss <= epsilon,
            vacuous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub t: f64,
    pub epsilon: f64,
    pub ecr: f64,
    pub fnr_mean: f64,
    pub fnr_std: f64,
    pub pc_mean: f64,
    pub pc_std: f64,
    pub n_test: usize,
    pub n_vacuous: usize,
    pub n_compliant: usize,
    pub per_sample: Vec<SampleMetrics>,
}

/// Mean and population standard deviation, folded in iteration order.
pub fn mean_std(values: impl IntoIterator<Item = f64> + Clone) -> (f64, f64) {
    let (sum, n) = values
        .clone()
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum / n as f64;
    let var = values
        .into_iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / n as f64;
    (mean, var.sqrt())
}

fn aggregate(per_sample: Vec<SampleMetrics>, t: f64, epsilon: f64) -> SplitMetrics {
    let n_test = per_sample.len();
    let n_compliant = per_sample.iter().filter(|s| s.compliant).count();
    let n_vacuous = per_sample.iter().filter(|s| s.vacuous).count();
    let (fnr_mean, fnr_std) = mean_std(per_sample.iter().map(|s| s.loss));
    let (pc_mean, pc_std) = mean_std(per_sample.iter().map(|s| s.pc));
    SplitMetrics {
        t,
        epsilon,
        ecr: n_compliant as f64 / n_test as f64,
        fnr_mean,
        fnr_std,
        pc_mean,
        pc_std,
        n_test,
        n_vacuous,
        n_compliant,
        per_sample,
    }
}

fn scan_sample(sample: &SamplePair, thr: ThresholdParam, epsilon: f64) -> SampleMetrics {
    let (mut covered, mut lesion, mut predicted) = (0, 0, 0);
    for (&l, v) in sample.label.values().iter().zip(sample.confidence.iter()) {
        let hit = thr.admits(v);
        predicted += usize::from(hit);
        if l == 1 {
            lesion += 1;
            covered += usize::from(hit);
        }
    }
    SampleMetrics::from_counts(
        &sample.id,
        covered,
        lesion,
        predicted,
        sample.dims().len(),
        epsilon,
    )
}

/// Scores every test sample at `t` and aggregates. Per-sample work runs in
/// parallel; the aggregation is a sequential fold in input order.
pub fn evaluate_at(test: &[SamplePair], t: f64, epsilon: f64) -> Result<SplitMetrics> {
    if test.is_empty() {
        return Err(Error::EmptyTestSplit);
    }
    let thr = ThresholdParam::new(t)?;
    check_unit("epsilon", epsilon)?;
    let per_sample = test
        .par_iter()
        .map(|s| scan_sample(s, thr, epsilon))
        .collect();
    Ok(aggregate(per_sample, t, epsilon))
}

pub fn evaluate_split(test: &[SamplePair], calib: &CalibrationResult) -> Result<SplitMetrics> {
    evaluate_at(test, calib.t_hat, calib.epsilon)
}

pub fn fixed_threshold_baseline(
    test: &[SamplePair],
    t_fixed: f64,
    epsilon: f64,
) -> Result<SplitMetrics> {
    evaluate_at(test, t_fixed, epsilon)
}

/// Same as [`evaluate_at`] over pre-sorted profiles.
pub fn evaluate_profiles<'a, I>(test: I, t: f64, epsilon: f64) -> Result<SplitMetrics>
where
    I: IntoIterator<Item = &'a SampleProfile>,
{
    check_unit("t", t)?;
    let per_sample: Vec<_> = test
        .into_iter()
        .map(|p| {
            SampleMetrics::from_counts(
                &p.id,
                p.covered(t),
                p.lesion_count(),
                p.predicted(t),
                p.voxel_count(),
                epsilon,
            )
        })
        .collect();
    if per_sample.is_empty() {
        return Err(Error::EmptyTestSplit);
    }
    Ok(aggregate(per_sample, t, epsilon))
}
