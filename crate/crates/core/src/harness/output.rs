use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::{trial_seed, ExperimentReport, SELECTION_RULE};
use crate::error::{Error, Result};

pub const RESULTS_FILE: &str = "results.csv";
pub const TRIALS_FILE: &str = "trials.csv";
pub const MANIFEST_FILE: &str = "run.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const MANIFEST_FORMAT: &str = "fkrf2e-run/1";

pub const RESULTS_COLUMNS: [&str; 19] = [
    "point", "method", "kernel", "degree", "coef", "gain", "k_rule", "k", "gamma", "mu", "lambda", "sd_mean",
    "sd_std", "error_mean", "error_std", "n_trials", "n_failed", "valid", "best",
];

pub const TRIALS_COLUMNS: [&str; 9] = ["point", "trial", "seed", "attempts", "status", "sd", "error", "n_test", "message"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn kernel_params(k: &super::config::KernelChoice, dim: usize) -> (String, String, String) {
    use crate::kernels::KernelSpec;
    match k.resolve(dim) {
        KernelSpec::Linear => (String::new(), String::new(), String::new()),
        KernelSpec::Polynomial { degree, coef } => (degree.to_string(), coef.to_string(), String::new()),
        KernelSpec::Sigmoid { gain, coef } => (String::new(), coef.to_string(), gain.to_string()),
        KernelSpec::Rbf { gain } => (String::new(), String::new(), gain.to_string()),
    }
}

pub fn results_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_COLUMNS)?;
    for r in &report.points {
        let p = &r.point;
        let (degree, coef, gain) = kernel_params(&p.kernel, report.dim);
        let s = r.summary;
        w.write_record([
            p.index.to_string(),
            p.method.name().to_string(),
            p.kernel.label(),
            degree,
            coef,
            gain,
            opt(p.k_rule.map(|k| k.label())),
            opt(r.k),
            opt(p.gamma),
            opt(p.mu),
            opt(p.lambda),
            opt(s.map(|s| s.sd_mean)),
            opt(s.map(|s| s.sd_std)),
            opt(s.map(|s| s.error_mean)),
            opt(s.map(|s| s.error_std)),
            opt(s.map(|s| s.count)),
            r.n_failed.to_string(),
            r.valid.to_string(),
            (report.best == Some(p.index)).to_string(),
        ])?;
    }
    finish(w)
}

pub fn trials_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRIALS_COLUMNS)?;
    for t in &report.trials {
        let status = match (&t.report, t.attempts) {
            (Some(_), 1) => "ok",
            (Some(_), _) => "retried",
            (None, _) => "failed",
        };
        w.write_record([
            t.point.to_string(),
            t.trial.to_string(),
            t.seed.to_string(),
            t.attempts.to_string(),
            status.to_string(),
            opt(t.report.map(|r| r.sd)),
            opt(t.report.map(|r| r.error)),
            opt(t.report.map(|r| r.n_test)),
            t.message.clone().unwrap_or_default(),
        ])?;
    }
    finish(w)
}

/// Two columns for plotting a one-parameter sweep against mean SD.
pub fn sweep_csv(report: &ExperimentReport, over: SweepAxis) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([over.column(), "sd_mean"])?;
    for r in report.points.iter().filter(|r| r.valid) {
        let x = match over {
            SweepAxis::K => opt(r.k),
            SweepAxis::Kernel => r.point.kernel.label(),
        };
        w.write_record([x, opt(r.summary.map(|s| s.sd_mean))])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    Kernel,
}

impl SweepAxis {
    fn column(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::Kernel => "kernel",
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'a str,
    version: &'a str,
    config: &'a ExperimentConfig,
    selection_rule: &'a str,
    best_point: Option<usize>,
    trial_seeds: Vec<u64>,
    dataset: DatasetInfo<'a>,
}

#[derive(Serialize)]
struct DatasetInfo<'a> {
    source: &'a str,
    schema_hash: &'a str,
    n: usize,
    n_u: usize,
    dim: usize,
}

pub fn manifest_json(report: &ExperimentReport) -> Result<String> {
    let cfg = &report.config;
    let m = Manifest {
        format: MANIFEST_FORMAT,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        selection_rule: SELECTION_RULE,
        best_point: report.best,
        trial_seeds: (0..cfg.trials).map(|t| trial_seed(cfg, t)).collect(),
        dataset: DatasetInfo {
            source: &report.source,
            schema_hash: &report.schema_hash,
            n: report.n,
            n_u: report.n_u,
            dim: report.dim,
        },
    };
    let mut s = serde_json::to_string_pretty(&m)?;
    s.push('\n');
    Ok(s)
}

/// Writes `results.csv`, `trials.csv`, `run.json` (and `sweep.csv` for
/// sweeps) into `out_dir`, creating it if needed. Returns the written paths.
pub fn emit_results(report: &ExperimentReport, out_dir: &Path, sweep: Option<SweepAxis>) -> Result<Vec<PathBuf>> {
    if report.points.is_empty() {
        return Err(Error::Config("empty grid: nothing to write".into()));
    }
    // render everything before touching the file system
    let mut files = vec![
        (RESULTS_FILE, results_csv(report)?),
        (TRIALS_FILE, trials_csv(report)?),
        (MANIFEST_FILE, manifest_json(report)?),
    ];
    if let Some(axis) = sweep {
        files.push((SWEEP_FILE, sweep_csv(report, axis)?));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
