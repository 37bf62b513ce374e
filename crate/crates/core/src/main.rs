use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use fkrf2e::data::{label_group_correlation, load_csv, standardize, DatasetSchema};
use fkrf2e::embedding::{EmbeddingModel, EmbeddingOptions, MdMatrixMode};
use fkrf2e::harness::{
    config_document, emit_results, grid_points, overlay, run_experiment, run_trial, ExperimentConfig, KRule,
    KernelChoice, Method, SweepAxis, OUT_DIR_ENV,
};
use fkrf2e::regression::{fit_fkrr, FairRegressor};
use fkrf2e::{Error, Persist, Result};

/// Fair kernel regression through fair feature embeddings.
#[derive(Parser, Debug)]
#[command(name = "fkrf2e", version)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a CSV through a schema and print a summary.
    LoadCheck {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Fit one model on the whole dataset and save it.
    Fit {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Where to write the model; the standardization parameters go next
        /// to it with a `.scaler.json` suffix.
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Run a single trial of a single grid point and print its report.
    Eval {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long, default_value_t = 0)]
        point: usize,
    },
    /// Run the full protocol and write results.csv, trials.csv and run.json.
    Experiment {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Like `experiment`, varying only k or only the kernel; also writes sweep.csv.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, value_enum)]
        over: Axis,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Axis {
    K,
    Kernel,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Fkrf2e,
    Fkrr,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MdModeArg {
    RankOne,
    BlockQuadratic,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory (the environment variable FKRF2E_OUT_DIR wins).
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

/// Flags mirror the config file; values in `--config` take precedence.
#[derive(Args, Debug, Default)]
struct ExperimentArgs {
    /// JSON experiment config or a run.json manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    schema: Option<PathBuf>,
    /// Use a synthetic dataset with this many rows instead of a CSV.
    #[arg(long, conflicts_with = "data")]
    synthetic: Option<usize>,
    #[arg(long, requires = "synthetic")]
    synthetic_dim: Option<usize>,
    #[arg(long, requires = "synthetic")]
    synthetic_seed: Option<u64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// `linear`, `poly:DEG:COEF`, `sigmoid[:GAIN[:COEF]]` or `rbf[:GAIN]`; repeatable.
    #[arg(long)]
    kernel: Vec<String>,
    /// k = ceil(n_train / DEN); repeatable.
    #[arg(long)]
    k_fraction: Vec<usize>,
    /// Absolute k; repeatable.
    #[arg(long)]
    k: Vec<usize>,
    #[arg(long)]
    gamma: Vec<f64>,
    #[arg(long)]
    intercept: bool,
    #[arg(long)]
    mu: Vec<f64>,
    #[arg(long)]
    lambda: Vec<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    md_mode: Option<MdModeArg>,
    #[arg(long)]
    no_standardize: bool,
    #[arg(long)]
    threshold: Option<f64>,
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

impl ExperimentArgs {
    fn flag_document(&self) -> Result<Value> {
        let mut m = Map::new();
        if let (Some(d), Some(s)) = (&self.data, &self.schema) {
            m.insert("dataset".into(), json!({"kind": "csv", "path": absolute(d), "schema": absolute(s)}));
        }
        if let Some(n) = self.synthetic {
            let mut d = json!({"kind": "synthetic", "n": n});
            if let Some(dim) = self.synthetic_dim {
                d["dim"] = json!(dim);
            }
            if let Some(seed) = self.synthetic_seed {
                d["seed"] = json!(seed);
            }
            m.insert("dataset".into(), d);
        }
        if let Some(method) = self.method {
            let method = match method {
                MethodArg::Fkrf2e => Method::Fkrf2e,
                MethodArg::Fkrr => Method::Fkrr,
            };
            m.insert("method".into(), serde_json::to_value(method)?);
        }
        if !self.kernel.is_empty() {
            let kernels: Vec<KernelChoice> = self.kernel.iter().map(|k| KernelChoice::parse(k)).collect::<Result<_>>()?;
            m.insert("kernels".into(), serde_json::to_value(kernels)?);
        }
        let mut rules: Vec<KRule> = self.k_fraction.iter().map(|&d| KRule::Fraction(d)).collect();
        rules.extend(self.k.iter().map(|&k| KRule::Absolute(k)));
        if !rules.is_empty() {
            m.insert("k_rules".into(), serde_json::to_value(rules)?);
        }
        for (key, v) in [("ridge_gammas", &self.gamma), ("fkrr_mus", &self.mu), ("fkrr_lambdas", &self.lambda)] {
            if !v.is_empty() {
                m.insert(key.into(), json!(v));
            }
        }
        if self.intercept {
            m.insert("ridge_intercept".into(), json!(true));
        }
        if let Some(t) = self.trials {
            m.insert("trials".into(), json!(t));
        }
        if let Some(f) = self.test_fraction {
            m.insert("test_fraction".into(), json!(f));
        }
        if let Some(s) = self.seed {
            m.insert("seed".into(), json!(s));
        }
        if let Some(mode) = self.md_mode {
            let mode = match mode {
                MdModeArg::RankOne => MdMatrixMode::RankOne,
                MdModeArg::BlockQuadratic => MdMatrixMode::BlockQuadratic,
            };
            m.insert("md_mode".into(), serde_json::to_value(mode)?);
        }
        if self.no_standardize {
            m.insert("standardize".into(), json!(false));
        }
        if let Some(t) = self.threshold {
            m.insert("threshold".into(), json!(t));
        }
        Ok(Value::Object(m))
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut doc = self.flag_document()?;
        let mut base = None;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let file: Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            overlay(&mut doc, config_document(file));
            base = path.parent().map(absolute);
        }
        if doc.get("dataset").is_none() {
            return Err(Error::Config(
                "no dataset given (use --data/--schema, --synthetic or a config file)".into(),
            ));
        }
        ExperimentConfig::from_value(doc, base.as_deref())
    }
}

fn out_dir(args: &OutArgs) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => args.out.clone(),
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn load_check(data: &Path, schema: &Path) -> Result<()> {
    let schema = DatasetSchema::load(schema)?;
    let ds = load_csv::<f64>(data, &schema)?;
    let positives = ds.y.iter().filter(|&&v| v == 1).count();
    print_json(&json!({
        "source": ds.provenance.source,
        "schema_hash": ds.provenance.schema_hash,
        "n": ds.n(),
        "n_unprotected": ds.n_u,
        "n_protected": ds.n_p(),
        "dim": ds.dim(),
        "positive_rate": positives as f64 / ds.n() as f64,
        "label_group_correlation": label_group_correlation(&ds),
    }));
    Ok(())
}

fn single_point(cfg: &ExperimentConfig) -> Result<fkrf2e::harness::GridPoint> {
    let points = grid_points(cfg);
    if points.len() != 1 {
        return Err(Error::Config(format!("fit needs exactly one grid point, config has {}", points.len())));
    }
    Ok(points[0])
}

fn fit(cfg: &ExperimentConfig, model_out: &Path) -> Result<()> {
    let point = single_point(cfg)?;
    let ds = cfg.dataset.load()?;
    let (ds, scaler) = if cfg.standardize {
        let (a, _, sc) = standardize(&ds, &ds)?;
        (a, Some(sc))
    } else {
        (ds, None)
    };
    let spec = point.kernel.resolve(ds.dim());
    let y = ds.targets();
    let summary = match cfg.method {
        Method::Fkrf2e => {
            let k = point.k_rule.unwrap_or_default().resolve(ds.n());
            let opts = EmbeddingOptions::new(k).mode(cfg.md_mode);
            let (embedding, g) = EmbeddingModel::fit(&ds.features, ds.n_u, spec, &opts)?;
            let x_fs = embedding.project_train(&g)?;
            let model = FairRegressor::fit(embedding, &x_fs, &y, point.gamma.unwrap_or(1.0), cfg.ridge_intercept)?
                .with_threshold(cfg.threshold);
            model.save(model_out)?;
            json!({"format": FairRegressor::<f64>::FORMAT, "k": k, "eigenvalues": model.embedding.eigenvalues,
                   "beta": model.beta, "jitter": model.embedding.jitter})
        }
        Method::Fkrr => {
            let mut model = fit_fkrr(
                &ds.features,
                &ds.sensitive(),
                &y,
                spec,
                point.mu.unwrap_or(1.0),
                point.lambda.unwrap_or(1.0),
            )?;
            model.threshold = cfg.threshold;
            model.save(model_out)?;
            json!({"format": fkrf2e::regression::FkrrModel::<f64>::FORMAT, "n": ds.n()})
        }
    };
    if let Some(sc) = scaler {
        let mut name = model_out.as_os_str().to_owned();
        name.push(".scaler.json");
        let path = PathBuf::from(name);
        std::fs::write(&path, serde_json::to_string_pretty(&sc)?).map_err(|e| Error::Io { path, source: e })?;
    }
    print_json(&summary);
    Ok(())
}

fn eval(cfg: &ExperimentConfig, point: usize, trial: usize) -> Result<()> {
    let points = grid_points(cfg);
    let p = points
        .get(point)
        .ok_or_else(|| Error::Config(format!("grid has {} points, asked for point {point}", points.len())))?;
    let ds = cfg.dataset.load()?;
    let report = run_trial(cfg, p, &ds, trial)?;
    print_json(&serde_json::to_value(report)?);
    Ok(())
}

fn experiment(cfg: &ExperimentConfig, out: &Path, sweep: Option<SweepAxis>) -> Result<()> {
    let report = run_experiment(cfg)?;
    let written = emit_results(&report, out, sweep)?;
    for p in written {
        println!("{}", p.display());
    }
    if let Some(b) = report.best {
        let s = report.points[b].summary.expect("best point has a summary");
        log::info!("best point {b}: sd {:.4} ± {:.4}, error {:.4} ± {:.4}", s.sd_mean, s.sd_std, s.error_mean, s.error_std);
    } else {
        log::warn!("no valid grid point");
    }
    Ok(())
}

/// Fills in the default grid of the swept axis and checks the other axes are fixed.
fn sweep_config(mut cfg: ExperimentConfig, axis: Axis) -> Result<ExperimentConfig> {
    let fixed = |name: &str, len: usize| {
        if len > 1 {
            Err(Error::Config(format!("a sweep varies one axis; {name} has {len} values")))
        } else {
            Ok(())
        }
    };
    match axis {
        Axis::K => {
            if cfg.method != Method::Fkrf2e {
                return Err(Error::Config("k sweeps apply to the embedding method only".into()));
            }
            if cfg.k_rules.len() == 1 {
                cfg.k_rules = [250, 200, 150, 100].map(KRule::Fraction).to_vec();
            }
            fixed("kernels", cfg.kernels.len())?;
        }
        Axis::Kernel => {
            if cfg.kernels.len() == 1 {
                cfg.kernels = vec![
                    KernelChoice::Linear,
                    KernelChoice::Polynomial { degree: 4, coef: 0.1 },
                    KernelChoice::Sigmoid { gain: None, coef: 0.01 },
                    KernelChoice::Rbf { gain: None },
                ];
            }
            fixed("k_rules", if cfg.method == Method::Fkrf2e { cfg.k_rules.len() } else { 1 })?;
        }
    }
    match cfg.method {
        Method::Fkrf2e => fixed("ridge_gammas", cfg.ridge_gammas.len())?,
        Method::Fkrr => {
            fixed("fkrr_mus", cfg.fkrr_mus.len())?;
            fixed("fkrr_lambdas", cfg.fkrr_lambdas.len())?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::LoadCheck { data, schema } => load_check(&data, &schema),
        Command::Fit { exp, model_out } => fit(&exp.resolve()?, &model_out),
        Command::Eval { exp, trial, point } => eval(&exp.resolve()?, point, trial),
        Command::Experiment { exp, out } => experiment(&exp.resolve()?, &out_dir(&out), None),
        Command::Sweep { exp, out, over } => {
            let cfg = sweep_config(exp.resolve()?, over)?;
            let axis = match over {
                Axis::K => SweepAxis::K,
                Axis::Kernel => SweepAxis::Kernel,
            };
            experiment(&cfg, &out_dir(&out), Some(axis))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
