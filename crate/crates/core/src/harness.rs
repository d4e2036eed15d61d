//! Repeated random calibration/test splits.
//!
//! Trial `i` shuffles the dataset with the stream derived from
//! `(master_seed, i)`, calibrates on the first `floor(split_ratio * N)`
//! samples and evaluates the rest, both at the calibrated threshold and at a
//! fixed baseline threshold. Because the split depends only on the seed and
//! the trial index, every report is reproducible byte for byte and sweeps
//! over `alpha` see identical splits.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{guaranteed_compliance_bound, order_statistic_quantile};
use crate::error::{check_open_unit, check_unit, Error, Result};
use crate::fnr::SampleProfile;
use crate::metrics::{evaluate_profiles, mean_std, SplitMetrics, DEFAULT_BASELINE_T};
use crate::seed;
use crate::volume::SamplePair;

pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_SPLIT_RATIO: f64 = 0.5;

pub const CSV_HEADER: &str =
    "trial_index,alpha,epsilon,split_ratio,t_hat,ecr,fnr_mean,fnr_std,pc_mean,baseline_fnr_mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub trials: usize,
    pub split_ratio: f64,
    pub master_seed: u64,
    pub baseline_t: f64,
}

impl ExperimentConfig {
    pub fn new(epsilon: f64, alpha: f64) -> Self {
        Self {
            epsilon,
            alpha,
            trials: DEFAULT_TRIALS,
            split_ratio: DEFAULT_SPLIT_RATIO,
            master_seed: 0,
            baseline_t: DEFAULT_BASELINE_T,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("epsilon", self.epsilon)?;
        check_open_unit("alpha", self.alpha)?;
        check_open_unit("split_ratio", self.split_ratio)?;
        check_unit("baseline_t", self.baseline_t)?;
        if self.trials == 0 {
            return Err(Error::OutOfRange {
                name: "trials",
                value: 0.0,
                range: "[1, inf)",
            });
        }
        Ok(())
    }

    /// Calibration and test sizes for a dataset of `n` samples.
    pub fn split_sizes(&self, n: usize) -> Result<(usize, usize)> {
        check_open_unit("split_ratio", self.split_ratio)?;
        let x = self.split_ratio * n as f64;
        let r = x.round();
        let calibration = if (x - r).abs() <= 4.0 * f64::EPSILON * x.max(1.0) {
            r
        } else {
            x.floor()
        } as usize;
        let test = n.saturating_sub(calibration);
        if calibration == 0 || test == 0 {
            return Err(Error::DegenerateSplit {
                ratio: self.split_ratio,
                n,
                calibration,
                test,
            });
        }
        Ok((calibration, test))
    }
}

/// Sample indices of trial `trial_index`: `(calibration, test)`.
pub fn trial_split(n: usize, cfg: &ExperimentConfig, trial_index: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let (n_cal, _) = cfg.split_sizes(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    seed::shuffle(&mut order, &mut seed::stream(cfg.master_seed, trial_index as u64));
    let test = order.split_off(n_cal);
    Ok((order, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub t_hat: f64,
    pub quantile_index: usize,
    pub degenerate: bool,
    pub split_metrics: SplitMetrics,
    pub baseline_metrics: SplitMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// Mean and spread of per-trial ECR.
    pub ecr_mean: f64,
    pub ecr_std: f64,
    pub ecr_min: f64,
    /// Compliance pooled over every (trial, test sample) pair.
    pub pooled_compliance: f64,
    pub pooled_count: usize,
    /// Binomial standard error of `pooled_compliance`.
    pub pooled_se: f64,
    pub t_hat_mean: f64,
    pub fnr_mean_of_means: f64,
    /// Spread of the per-trial mean FNR across splits.
    pub fnr_std_across_trials: f64,
    /// Average within-split (across samples) FNR spread.
    pub fnr_std_within_trials: f64,
    pub pc_mean_of_means: f64,
    pub pc_std_across_trials: f64,
    pub baseline_fnr_mean_of_means: f64,
    pub baseline_ecr_mean: f64,
    pub degenerate_trials: usize,
    /// `k*/(n+1)` for the calibration size in use.
    pub compliance_bound: f64,
}

impl Aggregates {
    pub fn from_trials(per_trial: &[TrialRecord], compliance_bound: f64) -> Self {
        let ecr = per_trial.iter().map(|r| r.split_metrics.ecr);
        let (ecr_mean, ecr_std) = mean_std(ecr.clone());
        let ecr_min = ecr.fold(f64::INFINITY, f64::min);
        let (hits, count) = per_trial.iter().fold((0usize, 0usize), |(h, c), r| {
            (h + r.split_metrics.n_compliant, c + r.split_metrics.n_test)
        });
        let pooled = hits as f64 / count as f64;
        let (fnr_mean_of_means, fnr_std_across_trials) =
            mean_std(per_trial.iter().map(|r| r.split_metrics.fnr_mean));
        let (pc_mean_of_means, pc_std_across_trials) =
            mean_std(per_trial.iter().map(|r| r.split_metrics.pc_mean));
        Self {
            ecr_mean,
            ecr_std,
            ecr_min,
            pooled_compliance: pooled,
            pooled_count: count,
            pooled_se: (pooled * (1.0 - pooled) / count as f64).sqrt(),
            t_hat_mean: mean_std(per_trial.iter().map(|r| r.t_hat)).0,
            fnr_mean_of_means,
            fnr_std_across_trials,
            fnr_std_within_trials: mean_std(per_trial.iter().map(|r| r.split_metrics.fnr_std)).0,
            pc_mean_of_means,
            pc_std_across_trials,
            baseline_fnr_mean_of_means: mean_std(
                per_trial.iter().map(|r| r.baseline_metrics.fnr_mean),
            )
            .0,
            baseline_ecr_mean: mean_std(per_trial.iter().map(|r| r.baseline_metrics.ecr)).0,
            degenerate_trials: per_trial.iter().filter(|r| r.degenerate).count(),
            compliance_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub config: ExperimentConfig,
    pub n_dataset: usize,
    pub n_calibration: usize,
    pub n_test: usize,
    pub per_trial: Vec<TrialRecord>,
    pub aggregates: Aggregates,
}

impl TrialReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV line per trial, without header.
    pub fn csv_rows(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        for r in &self.per_trial {
            let m = &r.split_metrics;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.trial_index,
                c.alpha,
                c.epsilon,
                c.split_ratio,
                r.t_hat,
                m.ecr,
                m.fnr_mean,
                m.fnr_std,
                m.pc_mean,
                r.baseline_metrics.fnr_mean
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}", self.csv_rows())
    }
}

/// A dataset prepared for many splits.
pub struct Experiment<'a> {
    samples: &'a [SamplePair],
    profiles: Vec<SampleProfile>,
}

impl<'a> Experiment<'a> {
    pub fn new(samples: &'a [SamplePair]) -> Self {
        let profiles = samples.par_iter().map(SampleProfile::new).collect();
        Self { samples, profiles }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn profiles(&self) -> &[SampleProfile] {
        &self.profiles
    }

    pub fn run_trials(&self, cfg: &ExperimentConfig) -> Result<TrialReport> {
        cfg.validate()?;
        let n = self.samples.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let (n_cal, n_test) = cfg.split_sizes(n)?;
        let scores: Vec<Option<f64>> = self
            .profiles
            .iter()
            .map(|p| p.critical(cfg.epsilon))
            .collect();

        let per_trial = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| self.run_one(cfg, &scores, trial))
            .collect::<Result<Vec<_>>>()?;
        let aggregates =
            Aggregates::from_trials(&per_trial, guaranteed_compliance_bound(n_cal, cfg.alpha));
        Ok(TrialReport {
            config: cfg.clone(),
            n_dataset: n,
            n_calibration: n_cal,
            n_test,
            per_trial,
            aggregates,
        })
    }

    fn run_one(
        &self,
        cfg: &ExperimentConfig,
        scores: &[Option<f64>],
        trial_index: usize,
    ) -> Result<TrialRecord> {
        let (cal, test) = trial_split(self.samples.len(), cfg, trial_index)?;
        let cal_scores = cal
            .iter()
            .map(|&i| scores[i].ok_or_else(|| Error::EmptyGroundTruth(self.profiles[i].id.clone())))
            .collect::<Result<Vec<_>>>()?;
        let q = order_statistic_quantile(&cal_scores, cfg.alpha, 1.0)?;
        let test_profiles = || test.iter().map(|&i| &self.profiles[i]);
        Ok(TrialRecord {
            trial_index,
            t_hat: q.value,
            quantile_index: q.index,
            degenerate: q.degenerate,
            split_metrics: evaluate_profiles(test_profiles(), q.value, cfg.epsilon)?,
            baseline_metrics: evaluate_profiles(test_profiles(), cfg.baseline_t, cfg.epsilon)?,
        })
    }

    /// One report per `alpha`; trial `i` uses the same split in every report.
    pub fn sweep_alpha(&self, cfg: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<TrialReport>> {
        alphas
            .iter()
            .map(|&alpha| {
                self.run_trials(&ExperimentConfig {
                    alpha,
                    ..cfg.clone()
                })
            })
            .collect()
    }

    pub fn sweep_split_ratio(
        &self,
        cfg: &ExperimentConfig,
        ratios: &[f64],
    ) -> Result<Vec<TrialReport>> {
        ratios
            .iter()
            .map(|&split_ratio| {
                self.run_trials(&ExperimentConfig {
                    split_ratio,
                    ..cfg.clone()
                })
            })
            .collect()
    }
}

pub fn run_trials(dataset: &[SamplePair], cfg: &ExperimentConfig) -> Result<TrialReport> {
    Experiment::new(dataset).run_trials(cfg)
}

pub fn sweep_alpha(
    dataset: &[SamplePair],
    cfg: &ExperimentConfig,
    alphas: &[f64],
) -> Result<Vec<TrialReport>> {
    Experiment::new(dataset).sweep_alpha(cfg, alphas)
}

pub fn sweep_split_ratio(
    dataset: &[SamplePair],
    cfg: &ExperimentConfig,
    ratios: &[f64],
) -> Result<Vec<TrialReport>> {
    Experiment::new(dataset).sweep_split_ratio(cfg, ratios)
}
