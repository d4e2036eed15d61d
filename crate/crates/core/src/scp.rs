//! Split conformal prediction sets for K-class classification, built on the
//! same order-statistic quantile as segmentation calibration.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conformal::{order_statistic_quantile, QuantileSelection};
use crate::error::{check_unit, Error, Result};

pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutput {
    probs: Vec<f64>,
    true_label: Option<usize>,
}

impl ClassifierOutput {
    pub fn new(probs: Vec<f64>, true_label: Option<usize>) -> Result<Self> {
        let bad = |message: String| Error::ClassifierRow { row: 0, message };
        if probs.is_empty() {
            return Err(bad("no class probabilities".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(bad(format!("probability {p} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(bad(format!("probabilities sum to {total}")));
        }
        if let Some(y) = true_label.filter(|&y| y >= probs.len()) {
            return Err(bad(format!("label {y} outside [0, {})", probs.len())));
        }
        Ok(Self { probs, true_label })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn true_label(&self) -> Option<usize> {
        self.true_label
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// `1 - p_y`.
    pub fn score(&self, label: usize) -> f64 {
        1.0 - self.probs[label]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub included_labels: BTreeSet<usize>,
    pub q_hat: f64,
}

impl PredictionSet {
    pub fn contains(&self, label: usize) -> bool {
        self.included_labels.contains(&label)
    }
}

/// `1 - p(true label)` for every calibration row.
pub fn classification_scores(calib: &[ClassifierOutput]) -> Result<Vec<f64>> {
    calib
        .iter()
        .enumerate()
        .map(|(row, out)| {
            out.true_label
                .map(|y| out.score(y))
                .ok_or_else(|| Error::ClassifierRow {
                    row,
                    message: "missing true label".into(),
                })
        })
        .collect()
}

/// Conformal quantile of the calibration scores; 1 (every class) when the
/// quantile index exceeds the calibration size.
pub fn classification_quantile(calib: &[ClassifierOutput], alpha: f64) -> Result<QuantileSelection> {
    order_statistic_quantile(&classification_scores(calib)?, alpha, 1.0)
}

/// Every label whose score is at most `q_hat`.
pub fn classification_predict(test: &ClassifierOutput, q_hat: f64) -> Result<PredictionSet> {
    check_unit("q_hat", q_hat)?;
    Ok(PredictionSet {
        included_labels: (0..test.classes())
            .filter(|&y| test.score(y) <= q_hat)
            .collect(),
        q_hat,
    })
}

/// Synthetic K-class classifier: uniform true class, probabilities given by a
/// softmax over a Gaussian bump centered on the true class plus standard
/// normal logit noise, divided by `temperature`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticClassifier {
    pub classes: usize,
    pub bump_height: f64,
    pub bump_width: f64,
    pub temperature: f64,
}

impl SyntheticClassifier {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            bump_height: 2.0,
            bump_width: 1.0,
            temperature: 1.0,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ClassifierOutput {
        let y = rng.random_range(0..self.classes);
        let logits: Vec<f64> = (0..self.classes)
            .map(|j| {
                let dist = j as f64 - y as f64;
                let bump = self.bump_height * (-dist * dist / (2.0 * self.bump_width.powi(2))).exp();
                let noise: f64 = rng.sample(StandardNormal);
                (bump + noise) / self.temperature
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        ClassifierOutput::new(exp.iter().map(|e| e / total).collect(), Some(y))
            .expect("softmax output is normalized")
    }

    pub fn draw_many<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<ClassifierOutput> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}
