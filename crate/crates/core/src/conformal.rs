//! Split-conformal calibration of the test-time threshold.
//!
//! Given `n` calibration scores and a risk level `alpha`, the calibrated
//! threshold is the `k*`-th smallest score with `k* = ceil((1-alpha)(n+1))`.
//! For an exchangeable test sample the probability that its own score is at
//! most that order statistic is exactly `k*/(n+1) >= 1 - alpha`, and a score
//! at most `t_hat` is the same event as a loss at most `epsilon` at `t_hat`.
//!
//! When `k* > n` there is no such order statistic; the result is flagged
//! degenerate and falls back to `t_hat = 1`, which predicts every voxel.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, check_unit, Error, Result};
use crate::fnr::{critical_threshold_exact, guarded_ceil, CriticalScore};
use crate::volume::SamplePair;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    epsilon: f64,
    scores: Vec<CriticalScore>,
}

impl ScoreSet {
    pub fn new(epsilon: f64, scores: Vec<CriticalScore>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for s in &scores {
            if s.epsilon != epsilon {
                return Err(Error::InconsistentScores(format!(
                    "sample {:?} scored at epsilon {} (set has {epsilon})",
                    s.sample_id, s.epsilon
                )));
            }
            check_unit("t_i", s.t_i)?;
        }
        Ok(Self { epsilon, scores })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &[CriticalScore] {
        &self.scores
    }

    pub fn values(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.t_i).collect()
    }
}

/// Exact critical score for every sample, in input order.
pub fn collect_scores(samples: &[SamplePair], epsilon: f64) -> Result<ScoreSet> {
    check_unit("epsilon", epsilon)?;
    let scores = samples
        .par_iter()
        .map(|s| critical_threshold_exact(s, epsilon))
        .collect::<Result<Vec<_>>>()?;
    ScoreSet::new(epsilon, scores)
}

/// `ceil((1 - alpha)(n + 1))`, 1-based.
pub fn quantile_index(n: usize, alpha: f64) -> usize {
    guarded_ceil((1.0 - alpha) * (n as f64 + 1.0)) as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileSelection {
    pub value: f64,
    pub index: usize,
    pub degenerate: bool,
}

/// The conformal order statistic of an arbitrary score list. Duplicates are
/// kept; the statistic is taken over the multiset. `fallback` is returned
/// when the index exceeds the sample count.
pub fn order_statistic_quantile(
    values: &[f64],
    alpha: f64,
    fallback: f64,
) -> Result<QuantileSelection> {
    check_open_unit("alpha", alpha)?;
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let index = quantile_index(values.len(), alpha);
    if index > values.len() {
        return Ok(QuantileSelection {
            value: fallback,
            index,
            degenerate: true,
        });
    }
    let mut sorted = values.to_vec();
    let value = *sorted.select_nth_unstable_by(index - 1, f64::total_cmp).1;
    Ok(QuantileSelection {
        value,
        index,
        degenerate: false,
    })
}

/// Calibrated threshold together with the parameters it was derived under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub t_hat: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub n: usize,
    pub quantile_index: usize,
    pub degenerate: bool,
}

impl CalibrationResult {
    pub fn compliance_bound(&self) -> f64 {
        guaranteed_compliance_bound(self.n, self.alpha)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let result: Self = serde_json::from_slice(&bytes).map_err(|e| Error::Header {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        check_unit("t_hat", result.t_hat)?;
        Ok(result)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut json = serde_json::to_vec_pretty(self).expect("calibration serializes");
        json.push(b'\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

pub fn conformal_quantile(scores: &ScoreSet, alpha: f64) -> Result<CalibrationResult> {
    let q = order_statistic_quantile(&scores.values(), alpha, 1.0)?;
    Ok(CalibrationResult {
        t_hat: q.value,
        epsilon: scores.epsilon(),
        alpha,
        n: scores.n(),
        quantile_index: q.index,
        degenerate: q.degenerate,
    })
}

/// Scores every sample and takes the conformal quantile.
pub fn calibrate(samples: &[SamplePair], epsilon: f64, alpha: f64) -> Result<CalibrationResult> {
    check_open_unit("alpha", alpha)?;
    conformal_quantile(&collect_scores(samples, epsilon)?, alpha)
}

/// Exact marginal compliance probability `k*/(n+1)`; 1 in the degenerate
/// regime, where the fallback threshold complies trivially.
pub fn guaranteed_compliance_bound(n: usize, alpha: f64) -> f64 {
    let k = quantile_index(n, alpha);
    if k > n {
        1.0
    } else {
        k as f64 / (n as f64 + 1.0)
    }
}
