use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use segconf::{ConfidenceDist, GridDims};

#[derive(Debug, Parser)]
#[command(name = "segconf", version, about = "Conformal FNR-controlled thresholds for volumetric segmentation")]
pub struct Cli {
    /// Worker thread cap (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its manifest.
    Simulate(SimulateArgs),
    /// Calibrate a threshold on every sample of a manifest.
    Calibrate(CalibrateArgs),
    /// Threshold one confidence volume with a calibration file.
    Apply(ApplyArgs),
    /// Run repeated random calibration/test splits.
    Evaluate(EvaluateArgs),
    /// Repeat `evaluate` over ranges of alpha and/or split ratio.
    Sweep(SweepArgs),
    /// Split conformal prediction sets for a K-class classifier.
    #[command(name = "scp-classify")]
    ScpClassify(ScpArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Generator config as JSON; explicit flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid size as `d,h,w`.
    #[arg(long)]
    pub dims: Option<DimsArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `uniform01` or `beta:a,b`.
    #[arg(long)]
    pub lesion_conf: Option<DistArg>,
    /// `uniform01` or `beta:a,b`.
    #[arg(long)]
    pub background_conf: Option<DistArg>,
    /// Lesion semi-axis range as `min,max` voxels.
    #[arg(long)]
    pub radius: Option<RangeArg>,
    /// Replace an existing dataset.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a lesion/background confidence histogram (CSV) pooled
    /// over the calibration samples.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub confidence: PathBuf,
    #[arg(long)]
    pub calibration: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct TrialArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Fraction of samples used for calibration in each split.
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Threshold parameter of the fixed baseline (cut = 1 - t).
    #[arg(long, default_value_t = 0.5)]
    pub baseline_t: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub trial: TrialArgs,
    #[arg(long)]
    pub alpha: f64,
    /// Report JSON path; the per-trial CSV is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub trial: TrialArgs,
    /// Alpha used when only `--splits` is swept.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Inclusive range `start:stop:step`.
    #[arg(long)]
    pub alphas: Option<SweepRange>,
    /// Comma-separated split ratios.
    #[arg(long, value_delimiter = ',')]
    pub splits: Option<Vec<f64>>,
    /// Long-format CSV output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScpArgs {
    #[arg(long)]
    pub calib_csv: PathBuf,
    #[arg(long)]
    pub test_csv: PathBuf,
    #[arg(long)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DimsArg(pub GridDims);

impl FromStr for DimsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        match parts[..] {
            [d, h, w] => GridDims::new(d, h, w).map(DimsArg).map_err(|e| e.to_string()),
            _ => Err(format!("expected d,h,w, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DistArg(pub ConfidenceDist);

impl FromStr for DistArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "uniform01" {
            return Ok(DistArg(ConfidenceDist::Uniform01));
        }
        let params = s
            .strip_prefix("beta:")
            .ok_or_else(|| format!("expected uniform01 or beta:a,b, got {s:?}"))?;
        let RangeArg([a, b]) = params.parse()?;
        if a > 0.0 && b > 0.0 {
            Ok(DistArg(ConfidenceDist::Beta { a, b }))
        } else {
            Err(format!("beta parameters must be positive, got {a},{b}"))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RangeArg(pub [f64; 2]);

impl FromStr for RangeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        match parts[..] {
            [a, b] => Ok(RangeArg([a, b])),
            _ => Err(format!("expected two comma-separated numbers, got {s:?}")),
        }
    }
}

/// Inclusive arithmetic range `start:stop:step`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRange(pub Vec<f64>);

impl FromStr for SweepRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(format!("expected start:stop:step, got {s:?}"));
        };
        if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
            return Err(format!("step must be positive in {s:?}"));
        }
        if start > stop {
            return Err(format!("empty range {s:?}"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // Snap to 12 decimals so 0.1 + 2 * 0.1 reads as 0.3.
        let values = (0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect();
        Ok(SweepRange(values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_ranges() {
        assert_eq!(
            "0.1:0.5:0.1".parse::<SweepRange>().unwrap().0,
            [0.1, 0.2, 0.3, 0.4, 0.5]
        );
        assert_eq!("0.2:0.2:0.1".parse::<SweepRange>().unwrap().0, [0.2]);
        assert!("0.5:0.1:0.1".parse::<SweepRange>().is_err());
        assert!("0.1:0.5:0".parse::<SweepRange>().is_err());
        assert!("0.1:0.5".parse::<SweepRange>().is_err());
    }

    #[test]
    fn dims_and_dists() {
        assert_eq!("4,5,6".parse::<DimsArg>().unwrap().0, GridDims::new(4, 5, 6).unwrap());
        assert!("32,32".parse::<DimsArg>().is_err());
        assert!("0,1,1".parse::<DimsArg>().is_err());
        assert!(matches!(
            "beta:2,5".parse::<DistArg>().unwrap().0,
            ConfidenceDist::Beta { a, b } if a == 2.0 && b == 5.0
        ));
        assert!("beta:0,5".parse::<DistArg>().is_err());
        assert!("gamma:1,1".parse::<DistArg>().is_err());
    }
}
