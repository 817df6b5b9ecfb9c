//! Monte Carlo studies: simulate, filter with each sampler variant, score.
//!
//! Output files in the configured directory:
//!
//! | file | contents |
//! |---|---|
//! | `raw_scans.csv` | per grid point, trial, variant and scan: hypothesis and unique-sample counts, cardinalities, OSPA |
//! | `raw_trials.csv` | per grid point, trial and variant: mean OSPA, OSPA(2), mean counts |
//! | `timing.csv` | per scan: filter and kernel wall-clock seconds |
//! | `aggregate.csv` | mean and standard deviation over trials of every per-trial quantity |
//!
//! The raw files depend only on the configuration; timings live apart so
//! that repeated runs can be compared byte for byte.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::gibbs::Variant;
use crate::glmb::GlmbFilter;
use crate::metrics::{estimate_trajectories, ospa, ospa2, truth_trajectories, Point};
use crate::rng::derive_seed;
use crate::scenario::{generate_measurements, generate_truth};

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub scan: u32,
    pub n_hypotheses: usize,
    pub n_unique_samples: usize,
    pub map_cardinality: usize,
    pub true_cardinality: usize,
    pub ospa: f64,
    pub cpu_seconds: f64,
    pub kernel_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub point: usize,
    pub value: Option<f64>,
    pub trial: usize,
    pub variant: Variant,
    pub scans: Vec<ScanRecord>,
    pub ospa2: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl TrialRecord {
    pub fn mean_ospa(&self) -> f64 {
        mean(self.scans.iter().map(|s| s.ospa))
    }

    pub fn mean_unique_samples(&self) -> f64 {
        mean(self.scans.iter().map(|s| s.n_unique_samples as f64))
    }

    pub fn mean_hypotheses(&self) -> f64 {
        mean(self.scans.iter().map(|s| s.n_hypotheses as f64))
    }

    pub fn mean_cpu_seconds(&self) -> f64 {
        mean(self.scans.iter().map(|s| s.cpu_seconds))
    }

    pub fn mean_kernel_seconds(&self) -> f64 {
        mean(self.scans.iter().map(|s| s.kernel_seconds))
    }
}

/// Mean OSPA(2) over sliding windows of `window` scans ending at each scan
/// from `window - 1` on; a window of 0 or the full duration gives one value.
fn windowed_ospa2(
    truth: &[crate::metrics::Trajectory],
    est: &[crate::metrics::Trajectory],
    duration: u32,
    window: u32,
    p: f64,
    c: f64,
) -> Result<f64> {
    let len = if window == 0 { duration } else { window.min(duration) };
    let values = (len - 1..duration)
        .map(|k| ospa2(truth, est, k + 1 - len..=k, p, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(values.into_iter()))
}

fn run_trial(cfg: &ExperimentConfig, point: usize, value: Option<f64>, trial: usize) -> Result<Vec<TrialRecord>> {
    let cfg = cfg.at(value);
    let params = cfg.scenario_params(derive_seed(cfg.seed, &[trial as u64, 0]));
    let truth = generate_truth(&params);
    let frames = generate_measurements(&truth, &params.sensor, derive_seed(cfg.seed, &[trial as u64, 1]));
    let models = params.filter_models();
    let truth_tracks = truth_trajectories(&truth);
    let (p, c) = (cfg.metrics.ospa_order, cfg.metrics.ospa_cutoff);
    cfg.variants
        .iter()
        .map(|&variant| {
            let budget = cfg.budget(variant, derive_seed(cfg.seed, &[trial as u64, 2]));
            let mut filter = GlmbFilter::new(models.clone(), budget)?;
            let mut reports = Vec::with_capacity(frames.len());
            let mut scans = Vec::with_capacity(frames.len());
            for frame in &frames {
                let r = filter.step(frame)?;
                let x: Vec<Point> = truth.states_at(frame.scan).iter().map(|(_, s)| Point::new(s[0], s[2])).collect();
                let y: Vec<Point> = r.estimates.iter().map(|(_, s)| Point::new(s[0], s[2])).collect();
                scans.push(ScanRecord {
                    scan: frame.scan,
                    n_hypotheses: r.n_hypotheses,
                    n_unique_samples: r.n_unique_samples,
                    map_cardinality: r.map_cardinality,
                    true_cardinality: x.len(),
                    ospa: ospa(&x, &y, p, c)?,
                    cpu_seconds: r.cpu_seconds,
                    kernel_seconds: r.kernel_seconds,
                });
                reports.push(r);
            }
            let est_tracks = estimate_trajectories(&reports);
            let ospa2 = windowed_ospa2(&truth_tracks, &est_tracks, params.duration, cfg.metrics.ospa2_window, p, c)?;
            Ok(TrialRecord {
                point,
                value,
                trial,
                variant,
                scans,
                ospa2,
            })
        })
        .collect()
}

/// Runs every grid point and trial, trials in parallel. Records are ordered
/// by grid point, trial, then variant as configured.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let jobs: Vec<(usize, Option<f64>, usize)> = cfg
        .grid()
        .into_iter()
        .enumerate()
        .flat_map(|(k, v)| (0..cfg.trials).map(move |t| (k, v, t)))
        .collect();
    let nested = jobs
        .par_iter()
        .map(|&(k, v, t)| run_trial(cfg, k, v, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(nested.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub point: usize,
    pub value: Option<f64>,
    pub variant: Variant,
    pub metric: &'static str,
    pub mean: f64,
    /// Sample standard deviation over trials (0 for a single trial).
    pub std: f64,
    pub trials: usize,
}

type Metric = (&'static str, fn(&TrialRecord) -> f64);

const METRICS: [Metric; 6] = [
    ("ospa", TrialRecord::mean_ospa),
    ("ospa2", |r| r.ospa2),
    ("unique_samples", TrialRecord::mean_unique_samples),
    ("hypotheses", TrialRecord::mean_hypotheses),
    ("cpu_seconds", TrialRecord::mean_cpu_seconds),
    ("kernel_seconds", TrialRecord::mean_kernel_seconds),
];

/// Mean and standard deviation over trials per grid point, variant and
/// metric.
pub fn summarize(records: &[TrialRecord]) -> Vec<Summary> {
    let mut keys: Vec<(usize, Option<f64>, Variant)> = Vec::new();
    for r in records {
        if !keys.iter().any(|k| k.0 == r.point && k.2 == r.variant) {
            keys.push((r.point, r.value, r.variant));
        }
    }
    let mut out = Vec::new();
    for (point, value, variant) in keys {
        let group: Vec<&TrialRecord> = records.iter().filter(|r| r.point == point && r.variant == variant).collect();
        for (metric, f) in METRICS {
            let xs: Vec<f64> = group.iter().map(|r| f(r)).collect();
            let m = mean(xs.iter().copied());
            let std = if xs.len() > 1 {
                (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            out.push(Summary {
                point,
                value,
                variant,
                metric,
                mean: m,
                std,
                trials: xs.len(),
            });
        }
    }
    out
}

fn value_field(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<PathBuf> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the four report files into `dir`, creating it if needed.
pub fn write_reports(cfg: &ExperimentConfig, records: &[TrialRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let parameter = cfg.sweep.as_ref().map_or("", |s| s.parameter.name());
    let mut files = Vec::new();
    files.push(write_file(dir, "raw_scans.csv", |w| {
        writeln!(w, "point,{0},trial,variant,scan,n_hypotheses,n_unique_samples,map_cardinality,true_cardinality,ospa", header(parameter))?;
        for r in records {
            for s in &r.scans {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.point,
                    value_field(r.value),
                    r.trial,
                    r.variant,
                    s.scan,
                    s.n_hypotheses,
                    s.n_unique_samples,
                    s.map_cardinality,
                    s.true_cardinality,
                    s.ospa
                )?;
            }
        }
        Ok(())
    })?);
    files.push(write_file(dir, "raw_trials.csv", |w| {
        writeln!(w, "point,{},trial,variant,mean_ospa,ospa2,mean_unique_samples,mean_hypotheses", header(parameter))?;
        for r in records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.point,
                value_field(r.value),
                r.trial,
                r.variant,
                r.mean_ospa(),
                r.ospa2,
                r.mean_unique_samples(),
                r.mean_hypotheses()
            )?;
        }
        Ok(())
    })?);
    files.push(write_file(dir, "timing.csv", |w| {
        writeln!(w, "point,{},trial,variant,scan,cpu_seconds,kernel_seconds", header(parameter))?;
        for r in records {
            for s in &r.scans {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    r.point,
                    value_field(r.value),
                    r.trial,
                    r.variant,
                    s.scan,
                    s.cpu_seconds,
                    s.kernel_seconds
                )?;
            }
        }
        Ok(())
    })?);
    files.push(write_file(dir, "aggregate.csv", |w| {
        writeln!(w, "point,{},variant,metric,mean,std,trials", header(parameter))?;
        for s in summarize(records) {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.point,
                value_field(s.value),
                s.variant,
                s.metric,
                s.mean,
                s.std,
                s.trials
            )?;
        }
        Ok(())
    })?);
    Ok(files)
}

fn header(parameter: &str) -> &str {
    if parameter.is_empty() {
        "value"
    } else {
        parameter
    }
}

pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub files: Vec<PathBuf>,
}

/// Runs the study and writes its reports to `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let records = run_trials(cfg)?;
    let files = write_reports(cfg, &records, &cfg.output_dir)?;
    Ok(ExperimentResult { records, files })
}
