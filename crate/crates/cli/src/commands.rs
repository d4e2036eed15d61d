use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use serde::Serialize;

use segconf::harness::CSV_HEADER;
use segconf::volume::{read_confidence, LoadContext};
use segconf::{
    calibrate, classification_predict, classification_quantile, generate_to_disk,
    lesion_confidence_histogram, load_manifest, predict_mask, write_volume, ClassifierOutput,
    Experiment, ExperimentConfig, GeneratorConfig, SamplePair, ThresholdParam, TrialReport,
};

use crate::args::{
    ApplyArgs, CalibrateArgs, Command, EvaluateArgs, ScpArgs, SimulateArgs, SweepArgs, TrialArgs,
};
use crate::{CliResult, Failure};

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Apply(a) => apply(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::ScpClassify(a) => scp_classify(a),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::io)
}

fn simulate(a: SimulateArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::io)?;
            serde_json::from_str::<GeneratorConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .map_err(Failure::validation)?
        }
        None => GeneratorConfig::default(),
    };
    if let Some(n) = a.n {
        cfg.n_samples = n;
    }
    if let Some(d) = a.dims {
        cfg.dims = d.0;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(d) = a.lesion_conf {
        cfg.lesion_conf = d.0;
    }
    if let Some(d) = a.background_conf {
        cfg.background_conf = d.0;
    }
    if let Some(r) = a.radius {
        cfg.radius_range = r.0;
    }
    let manifest = generate_to_disk(&cfg, &a.out, a.force).map_err(|e| match e {
        segconf::Error::AlreadyExists(_) => {
            Failure::validation(anyhow::Error::new(e).context("pass --force to regenerate"))
        }
        e => e.into(),
    })?;
    println!("{}", manifest.display());
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs) -> CliResult {
    let samples = load_manifest(&a.manifest, LoadContext::Calibration)?;
    let result = calibrate(&samples, a.epsilon, a.alpha)?;
    result.write(&a.out)?;
    if result.degenerate {
        eprintln!(
            "warning: quantile index {} exceeds n = {}; falling back to t_hat = 1 (predict every voxel)",
            result.quantile_index, result.n
        );
    }
    println!("t_hat {}", result.t_hat);
    println!("cut {}", 1.0 - result.t_hat);
    println!("n {}", result.n);
    println!("quantile_index {}", result.quantile_index);
    println!("compliance_bound {}", result.compliance_bound());
    if let Some(path) = &a.histogram {
        write_file(path, histogram_csv(&samples, a.bins)?)?;
    }
    Ok(())
}

fn histogram_csv(samples: &[SamplePair], bins: usize) -> CliResult<String> {
    let mut lesion = vec![0u64; bins];
    let mut background = vec![0u64; bins];
    let mut edges = Vec::new();
    for s in samples {
        let h = lesion_confidence_histogram(s, bins)?;
        for i in 0..bins {
            lesion[i] += h.lesion[i];
            background[i] += h.background[i];
        }
        edges = h.bin_edges();
    }
    let mut out = String::from("bin_lo,bin_hi,lesion,background\n");
    for (i, (lo, hi)) in edges.iter().enumerate() {
        out.push_str(&format!("{lo},{hi},{},{}\n", lesion[i], background[i]));
    }
    Ok(out)
}

fn apply(a: ApplyArgs) -> CliResult {
    let calibration = segconf::CalibrationResult::read(&a.calibration).map_err(Failure::io)?;
    let confidence = read_confidence(&a.confidence).map_err(Failure::io)?;
    let thr = ThresholdParam::new(calibration.t_hat)?;
    let mask = predict_mask(&confidence, thr);
    println!(
        "predicted {} of {} voxels at t_hat {}",
        mask.positive_count(),
        mask.dims().len(),
        thr.get()
    );
    write_volume(&mask.into(), &a.out)?;
    Ok(())
}

fn experiment_config(t: &TrialArgs, alpha: f64) -> ExperimentConfig {
    ExperimentConfig {
        epsilon: t.epsilon,
        alpha,
        trials: t.trials,
        split_ratio: t.split,
        master_seed: t.seed,
        baseline_t: t.baseline_t,
    }
}

fn warn_degenerate(report: &TrialReport) {
    let count = report.aggregates.degenerate_trials;
    if count > 0 {
        eprintln!(
            "warning: {count} of {} trials at alpha {} had too few calibration samples; t_hat = 1 used",
            report.per_trial.len(),
            report.config.alpha
        );
    }
}

fn evaluate(a: EvaluateArgs) -> CliResult {
    let samples = load_manifest(&a.trial.manifest, LoadContext::Evaluation)?;
    let cfg = experiment_config(&a.trial, a.alpha);
    cfg.validate()?;
    let report = Experiment::new(&samples).run_trials(&cfg)?;
    warn_degenerate(&report);
    write_file(&a.out, report.to_json() + "\n")?;
    write_file(&a.out.with_extension("csv"), report.to_csv())?;

    let g = &report.aggregates;
    println!("trials {}", report.per_trial.len());
    println!("calibration {} test {}", report.n_calibration, report.n_test);
    println!("ecr_mean {} (bound {})", g.ecr_mean, g.compliance_bound);
    println!("pooled_compliance {} (se {})", g.pooled_compliance, g.pooled_se);
    println!("fnr_mean {} baseline_fnr_mean {}", g.fnr_mean_of_means, g.baseline_fnr_mean_of_means);
    println!("pc_mean {}", g.pc_mean_of_means);
    Ok(())
}

fn sweep(a: SweepArgs) -> CliResult {
    let alphas = match (&a.alphas, a.alpha) {
        (Some(range), _) => range.0.clone(),
        (None, Some(alpha)) => vec![alpha],
        (None, None) => {
            return Err(Failure::validation(anyhow!(
                "sweep needs --alphas, or --alpha together with --splits"
            )))
        }
    };
    let splits = match &a.splits {
        Some(s) if s.is_empty() => return Err(Failure::validation(anyhow!("--splits is empty"))),
        Some(s) => s.clone(),
        None if a.alphas.is_none() => {
            return Err(Failure::validation(anyhow!("nothing to sweep: pass --alphas and/or --splits")))
        }
        None => vec![a.trial.split],
    };
    let samples = load_manifest(&a.trial.manifest, LoadContext::Evaluation)?;
    let exp = Experiment::new(&samples);
    let base = experiment_config(&a.trial, alphas[0]);
    base.validate()?;

    let mut csv = format!("{CSV_HEADER}\n");
    for &split_ratio in &splits {
        let cfg = ExperimentConfig {
            split_ratio,
            ..base.clone()
        };
        for report in exp.sweep_alpha(&cfg, &alphas)? {
            warn_degenerate(&report);
            println!(
                "alpha {} split {} ecr_mean {} t_hat_mean {} pc_mean {}",
                report.config.alpha,
                report.config.split_ratio,
                report.aggregates.ecr_mean,
                report.aggregates.t_hat_mean,
                report.aggregates.pc_mean_of_means
            );
            csv.push_str(&report.csv_rows());
        }
    }
    write_file(&a.out, csv)
}

fn read_classifier_csv(path: &Path, need_labels: bool) -> CliResult<Vec<ClassifierOutput>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::io)?;
    let headers = reader
        .headers()
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::validation)?
        .clone();
    let label_col = headers.iter().position(|h| h == "label");
    if need_labels && label_col.is_none() && !headers.is_empty() {
        return Err(Failure::validation(anyhow!(
            "{}: calibration CSV needs a `label` column",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let bad = |msg: String| Failure::validation(anyhow!("{} row {}: {msg}", path.display(), i + 1));
        let record = record.map_err(|e| bad(e.to_string()))?;
        let mut probs = Vec::new();
        let mut label = None;
        for (j, field) in record.iter().enumerate() {
            if Some(j) == label_col {
                if !field.is_empty() {
                    label = Some(field.parse::<usize>().map_err(|e| bad(format!("label {field:?}: {e}")))?);
                }
            } else {
                probs.push(field.parse::<f64>().map_err(|e| bad(format!("{field:?}: {e}")))?);
            }
        }
        if need_labels && label.is_none() {
            return Err(bad("missing label".into()));
        }
        rows.push(ClassifierOutput::new(probs, label).map_err(|e| bad(e.to_string()))?);
    }
    Ok(rows)
}

#[derive(Serialize)]
struct SetLine {
    set: Vec<usize>,
    q_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covered: Option<bool>,
}

fn scp_classify(a: ScpArgs) -> CliResult {
    let calib = read_classifier_csv(&a.calib_csv, true)?;
    let test = read_classifier_csv(&a.test_csv, false)?;
    let q = classification_quantile(&calib, a.alpha)?;
    if q.degenerate {
        eprintln!(
            "warning: quantile index {} exceeds n = {}; every class is included",
            q.index,
            calib.len()
        );
    }
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for row in &test {
        let set = classification_predict(row, q.value)?;
        let label = row.true_label();
        let line = SetLine {
            set: set.included_labels.iter().copied().collect(),
            q_hat: set.q_hat,
            label,
            covered: label.map(|y| set.contains(y)),
        };
        serde_json::to_writer(&mut out, &line).expect("line serializes");
        writeln!(out).map_err(Failure::io)?;
    }
    out.flush().map_err(Failure::io)
}
