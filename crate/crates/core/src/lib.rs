//! Conformal calibration of segmentation thresholds with a guaranteed
//! bound on the per-volume false negative rate.
//!
//! Given a calibration set of (confidence volume, ground-truth mask) pairs,
//! a tolerance `epsilon` on the fraction of missed lesion voxels and a risk
//! level `alpha`, [`calibrate`] returns a threshold `t_hat` such that an
//! exchangeable test volume, thresholded at confidence `1 - t_hat`, misses
//! at most an `epsilon` fraction of its lesion with probability at least
//! `1 - alpha`.
//!
//! ```
//! use segconf::{calibrate, generate, GeneratorConfig, GridDims};
//!
//! let cfg = GeneratorConfig {
//!     dims: GridDims::new(12, 12, 12).unwrap(),
//!     n_samples: 20,
//!     radius_range: [2.0, 4.0],
//!     ..GeneratorConfig::default()
//! };
//! let samples = generate(&cfg).unwrap();
//! let result = calibrate(&samples, 0.1, 0.2).unwrap();
//! assert!(!result.degenerate);
//! assert_eq!(result.quantile_index, 17);
//! ```

pub mod conformal;
pub mod error;
pub mod fnr;
pub mod harness;
pub mod metrics;
pub mod scp;
pub mod seed;
pub mod synth;
pub mod volume;

pub use conformal::{
    calibrate, collect_scores, conformal_quantile, guaranteed_compliance_bound,
    order_statistic_quantile, quantile_index, CalibrationResult, QuantileSelection, ScoreSet,
};
pub use error::{Error, Result};
pub use fnr::{
    critical_threshold_bisect, critical_threshold_exact, fnr_loss, lesion_confidence_histogram,
    predict_mask, ConfidenceHistogram, CriticalScore, FnrLossValue, SampleProfile, ScoreMethod,
    ThresholdParam, DEFAULT_BISECT_TOLERANCE,
};
pub use harness::{
    run_trials, sweep_alpha, sweep_split_ratio, Aggregates, Experiment, ExperimentConfig,
    TrialRecord, TrialReport,
};
pub use metrics::{evaluate_split, fixed_threshold_baseline, SampleMetrics, SplitMetrics};
pub use scp::{
    classification_predict, classification_quantile, classification_scores, ClassifierOutput,
    PredictionSet, SyntheticClassifier,
};
pub use synth::{generate, generate_to_disk, ConfidenceDist, GeneratorConfig};
pub use volume::{
    load_manifest, read_volume, write_volume, ConfidenceVolume, DatasetManifest, GridDims,
    LabelVolume, LoadContext, SamplePair, Volume,
};
